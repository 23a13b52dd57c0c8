use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("malformed header in {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("frame_count mismatch for video {video}: {what} has {found} frames, expected {expected}")]
    FrameCountMismatch {
        video: String,
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("malformed label file {path} line {line}: {message}")]
    Labels {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown video {0}")]
    UnknownVideo(String),

    #[error("frame {frame} out of range for video {video} ({frame_count} frames)")]
    FrameOutOfRange {
        video: String,
        frame: usize,
        frame_count: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid label {value} at sample {sample}, AU {au}; expected 0 or 1")]
    InvalidLabel { sample: usize, au: usize, value: i64 },

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { loss: f64, epoch: usize, step: usize },

    #[error("malformed checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
