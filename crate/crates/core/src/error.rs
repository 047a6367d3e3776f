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

    #[error("{path}:{line}: {msg}")]
    ParseLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: byte offset {offset}: {msg}")]
    ParseRecord {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("missing calibration key `{0}`")]
    MissingKey(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("objective is not finite at coordinate {coordinate} (value {value})")]
    NonFinite { coordinate: usize, value: f64 },

    #[error("optimizer diverged: {0}")]
    Diverged(String),

    #[error("synthetic scene out of frame: {0}")]
    OutOfFrame(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
