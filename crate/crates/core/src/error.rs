use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot access {path}")]
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

    #[error("invalid request {id}: {message}")]
    InvalidRequest { id: u64, message: String },

    #[error("duplicate request id {0}")]
    DuplicateId(u64),

    #[error("no prediction for request {0}")]
    MissingPrediction(u64),

    #[error("bucket boundaries: {0}")]
    Buckets(String),

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        SimError::Config(vec![message.into()])
    }

    /// True for failures of the filesystem rather than of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            SimError::Io { .. } => true,
            SimError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            SimError::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
