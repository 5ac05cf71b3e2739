use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("point {point:?} outside grid bounds")]
    OutOfBounds { point: [f64; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{file}: checkpoint architecture mismatch: expected {expected}")]
    ArchitectureMismatch { file: String, expected: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
