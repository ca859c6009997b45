use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error in {record}: {message}")]
    Format { record: String, message: String },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at step {step}: {message}")]
    Divergence { step: u64, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn format(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            record: record.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_)
            | Error::Pairing(_)
            | Error::Scheduling(_)
            | Error::Stratification(_)
            | Error::Schema(_)
            | Error::Argument(_)
            | Error::Shape(_) => 1,
            Error::Format { .. } | Error::Io { .. } | Error::Json { .. } | Error::Checkpoint(_) => 2,
            Error::Numeric(_) | Error::Divergence { .. } => 3,
            Error::Usage(_) => 64,
        }
    }
}
