use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const RECORD_FILE: &str = "run_record.json";

#[derive(Serialize)]
struct RunRecord<'a, E: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config: &'a RunConfig,
    /// Command-specific inputs and seeds not covered by `config`.
    extra: E,
}

/// Writes the resolved configuration beside a command's outputs.
pub fn write(out: &Path, command: &str, config: &RunConfig, extra: impl Serialize) -> Result<()> {
    let rec = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        config,
        extra,
    };
    let path = out.join(RECORD_FILE);
    let text = serde_json::to_string_pretty(&rec)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
