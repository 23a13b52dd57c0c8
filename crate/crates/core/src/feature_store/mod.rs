//! Dataset manifest, feature and label files, sample assembly with temporal
//! windows, video-independent splitting and synthetic data generation.

mod dataset;
pub mod feature_file;
pub mod labels;
mod manifest;
pub mod synth;

pub use dataset::{
    context_window, temporal_window, Dataset, FrameRef, FusionInput, FusionSample, LoadedVideo,
    CONTEXT_SECONDS, TEMPORAL_LEN, TEMPORAL_RADIUS,
};
pub use feature_file::{read_header, FeatureHeader, FeatureMatrix};
pub use labels::{filter_labels, read_labels, write_labels};
pub use manifest::{load_manifest, split_videos, DatasetManifest, Split, Stream, StreamDims, VideoEntry};
pub use synth::{generate_synthetic, generate_videos, planted_labels, planted_weights, SynthSpec, SynthVideo};
