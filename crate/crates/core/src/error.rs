use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("data integrity error: {0}")]
    Integrity(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("range error: {0}")]
    Range(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate geometry: {0}")]
    Degeneracy(String),
    #[error("tracking failed between frames {from} and {to}: {reason}")]
    Tracking {
        from: usize,
        to: usize,
        reason: String,
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
