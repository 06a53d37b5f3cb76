use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },
    #[error("model corrupt: {0}")]
    ModelCorrupt(String),
    #[error("training diverged at step {step}; last finite loss {last_finite_loss}")]
    Train { step: u64, last_finite_loss: f64 },
    #[error("label error: {0}")]
    Label(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
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
