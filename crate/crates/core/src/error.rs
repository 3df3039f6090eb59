use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid angle: {0}")]
    Angle(String),

    #[error("channel needs at least one path")]
    NoPaths,

    #[error("invalid prior: {0}")]
    Prior(String),

    #[error("invalid measurement set: {0}")]
    Measurement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no training samples for location key {0}")]
    EmptyHistory(String),

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("search too large: {0}")]
    Guard(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("malformed record at {path}:{line}: {reason}")]
    Record {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
