//! `aufuse`: synthetic data, training, evaluation and post-processing for
//! multi-modal AU detection.

mod commands;
mod config;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aufuse", version, about = "Multi-modal facial action unit detection")]
struct Cli {
    /// TOML config file (or a run_record.json from an earlier run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Falls back to the config file, then $AUFUSE_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset with planted labels.
    Synth(SynthArgs),
    /// Train the fusion model; writes best.ckpt and history.csv.
    Train(TrainArgs),
    /// Score a checkpoint on a split and emit per-video prediction tracks.
    Eval(EvalArgs),
    /// Smooth, fuse and threshold saved prediction tracks.
    Postprocess(PostprocessArgs),
    /// Macro F1 as a function of the smoothing window.
    Sweep(SweepArgs),
    /// Label correlation analysis and AU-correlation rule mining.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    videos: usize,
    #[arg(long, default_value_t = 500)]
    frames: usize,
    #[arg(long, default_value_t = 5.0)]
    fps: f64,
    /// swin,ghfeat,hubert,roberta widths.
    #[arg(long, value_delimiter = ',', default_values_t = [768, 512, 1280, 1024])]
    dims: Vec<usize>,
    /// Per-(run, AU) label flip probability.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    run_length: usize,
    #[arg(long, default_value_t = 4)]
    utterance_runs: usize,
    #[arg(long, default_value_t = 0.1)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0.2)]
    silent_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    unlabeled_rate: f64,
    /// Assign this fraction of videos to val; 0 leaves every video unassigned.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    proj_dim: Option<usize>,
    #[arg(long)]
    gru_hidden: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum StageArg {
    /// Base row only.
    Base,
    /// Base, + Smooth, + Threshold and + AUcorr rows.
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SplitArg {
    Train,
    Val,
    Test,
    Unassigned,
}

impl From<SplitArg> for aufuse_core::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
            SplitArg::Unassigned => Self::Unassigned,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum StreamArg {
    Visual,
    GhfeatStatic,
    GhfeatTemporal,
    Audio,
    Text,
}

impl From<StreamArg> for aufuse_core::model::InputStream {
    fn from(s: StreamArg) -> Self {
        match s {
            StreamArg::Visual => Self::Visual,
            StreamArg::GhfeatStatic => Self::GhfeatStatic,
            StreamArg::GhfeatTemporal => Self::GhfeatTemporal,
            StreamArg::Audio => Self::Audio,
            StreamArg::Text => Self::Text,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    split: SplitArg,
    #[arg(long, value_enum, default_value_t = StageArg::Base)]
    stage: StageArg,
    /// Tune thresholds on the smoothed tracks of this split instead of using
    /// the configured ones.
    #[arg(long, value_enum)]
    tune_split: Option<SplitArg>,
    #[arg(long)]
    window: Option<usize>,
    /// Zero a feature stream at the input (repeatable).
    #[arg(long, value_enum)]
    zero_stream: Vec<StreamArg>,
}

#[derive(Args, Debug)]
struct PostprocessArgs {
    /// Directory of <video>.csv logit tracks.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    /// JSON array of 12 thresholds (e.g. thresholds.json written by eval).
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Score the stages against this manifest's labels.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Window sizes: a range `2..32` (inclusive) or a list `1,2,6`.
    #[arg(long, default_value = "2..32")]
    k: String,
    /// Uniform decision threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// AU-AU Pearson matrix of the labeled frames.
    Pcc {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// AU-expression Pearson matrix; `--expr` is a CSV with columns
    /// video_id,frame_index followed by one column per expression.
    Expr {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        expr: PathBuf,
    },
    /// Propose AU-correlation rules from the label correlations and a report.
    Rules {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report CSV (as written by eval) supplying per-AU F1.
        #[arg(long)]
        f1: PathBuf,
        /// Report row to read; defaults to the first.
        #[arg(long)]
        row: Option<String>,
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        #[arg(long, default_value_t = 10.0)]
        min_gap: f64,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
