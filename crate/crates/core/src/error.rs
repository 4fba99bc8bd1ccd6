use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: frame is {frame:?}, reference renders to {reference:?}")]
    DimensionMismatch {
        frame: (usize, usize),
        reference: (usize, usize),
    },

    #[error("degenerate variance in {0}")]
    DegenerateVariance(&'static str),

    #[error("feature extraction failed for frame {frame_id}: {source}")]
    Feature {
        frame_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Network(#[from] tinycnn::Error),
}

/// Coarse error classes, used for CLI exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => Category::Config,
            Error::Numeric(_) | Error::DegenerateVariance(_) => Category::Numeric,
            Error::Feature { source, .. } => source.category(),
            Error::Network(tinycnn::Error::ShapeMismatch { .. }) => Category::Numeric,
            _ => Category::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
