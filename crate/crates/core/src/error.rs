use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("recording too short: {len} samples, need at least {required}")]
    TooShort { len: usize, required: usize },

    #[error("insufficient peaks")]
    InsufficientPeaks,

    #[error("cannot balance classes: {0}")]
    CannotBalance(String),

    #[error("non-tiling configuration {label}: last capsule ends at {end}, window is {len}")]
    NonTiling { label: String, end: usize, len: usize },

    #[error("capsule under-sampled: {intervals} RR intervals, need {required}")]
    UnderSampled { intervals: usize, required: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("cannot stratify: {0}")]
    CannotStratify(String),

    #[error("buffer warming up: {size} transitions, need {warmup}")]
    BufferWarmingUp { size: usize, warmup: usize },

    #[error("episode already finished")]
    EpisodeDone,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
