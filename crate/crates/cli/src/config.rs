//! Layered run configuration: built-in defaults, then a TOML (or recorded
//! JSON) file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aufuse_core::losses::LossWeights;
use aufuse_core::nn::Activation;
use aufuse_core::postprocess::{default_rules, PostprocessConfig};
use aufuse_core::{AuCorrRule, ThresholdVector, TrainConfig};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "AUFUSE_OUT";
pub const DEFAULT_OUT: &str = "aufuse-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub proj_dim: usize,
    pub gru_hidden: usize,
    pub mlp_hidden: usize,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            proj_dim: 128,
            gru_hidden: 128,
            mlp_hidden: 512,
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Used when the manifest still has unassigned videos.
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.lr,
            weight_decay: t.weight_decay,
            clip_norm: t.clip_norm,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostSection {
    pub window: usize,
    pub thresholds: ThresholdVector,
    pub rules: Vec<AuCorrRule>,
}

impl Default for PostSection {
    fn default() -> Self {
        PostSection {
            window: 6,
            thresholds: ThresholdVector::default(),
            rules: default_rules(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossWeights,
    pub postprocess: PostSection,
}

/// A run record stores the resolved config under this key.
#[derive(Deserialize)]
struct Recorded {
    config: RunConfig,
}

impl RunConfig {
    /// Reads `.toml` files, or `.json` run records written by a previous run.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<Recorded>(&text)
                .with_context(|| format!("parsing run record {}", path.display()))?
                .config
        } else {
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if !(self.train.val_fraction > 0.0 && self.train.val_fraction < 1.0) {
            bail!("train.val_fraction must be in (0, 1)");
        }
        if self.postprocess.window == 0 {
            bail!("postprocess.window must be at least 1");
        }
        ThresholdVector::new(self.postprocess.thresholds.0)?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            clip_norm: self.train.clip_norm,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
            loss_weights: self.loss.clone(),
        }
    }

    pub fn postprocess_config(&self) -> PostprocessConfig {
        PostprocessConfig {
            window: self.postprocess.window,
            thresholds: self.postprocess.thresholds,
            rules: self.postprocess.rules.clone(),
            ..PostprocessConfig::default()
        }
    }

    /// Flag, then config file, then `$AUFUSE_OUT`, then `./aufuse-out`.
    pub fn resolve_out(&mut self, flag: Option<PathBuf>) -> PathBuf {
        let out = flag
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        self.out_dir = Some(out.clone());
        out
    }
}

pub fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

macro_rules! set_if {
    ($($target:expr => $flag:expr),* $(,)?) => {
        $(if let Some(v) = $flag { $target = v; })*
    };
}
pub(crate) use set_if;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_settings() {
        let c = RunConfig::default();
        let t = c.train_config();
        assert_eq!((t.lr, t.weight_decay, t.clip_norm, t.batch_size, t.max_epochs, t.patience), (1e-5, 1e-5, 1.0, 256, 20, 5));
        assert_eq!(c.postprocess.window, 6);
        assert_eq!(c.postprocess.thresholds, ThresholdVector::default());
        assert_eq!(c.postprocess.rules, default_rules());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_toml_keeps_other_defaults() {
        let c: RunConfig = toml::from_str(
            r#"
            seed = 4
            [train]
            lr = 0.001
            [postprocess]
            window = 3
            rules = [{ target = "AU24", sources = ["AU4"] }]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.postprocess.window, 3);
        assert_eq!(c.postprocess.rules.len(), 1);
        assert_eq!(c.model, ModelSection::default());
    }

    #[test]
    fn unknown_keys_and_bad_rules_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rate = 1.0").is_err());
        assert!(toml::from_str::<RunConfig>("[postprocess]\nrules = [{ target = \"AU99\", sources = [\"AU4\"] }]").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
