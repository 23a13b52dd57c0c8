//! Multi-modal facial action unit (AU) detection.
//!
//! The crate consumes precomputed per-frame feature streams (two visual
//! streams, audio and text), trains an early-fusion model made of linear
//! projectors, bidirectional GRUs and a two-layer MLP head, and runs the
//! post-processing stack used at inference time: temporal logit smoothing,
//! per-AU threshold tuning and AU-correlation probability fusion.
//!
//! Everything numeric is hand written in `f64` with explicit backward passes,
//! so every gradient can be checked against finite differences
//! ([`nn::gradcheck`]).

pub mod au;
pub mod checkpoint;
pub mod error;
pub mod feature_store;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod postprocess;
pub mod trainer;

pub use au::{AuLabels, AU_NAMES, NUM_AUS};
pub use error::{Error, Result};
pub use feature_store::{DatasetManifest, FusionSample, Split, VideoEntry};
pub use losses::LossWeights;
pub use metrics::{EvalReport, PccMatrix};
pub use model::{ModelConfig, ModelParams};
pub use postprocess::{AuCorrRule, PredictionTrack, ThresholdVector};
pub use trainer::{TrainConfig, TrainHistory};
