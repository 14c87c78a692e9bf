use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular system (estimated condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unsupported grid size: {0}")]
    UnsupportedSize(String),

    #[error("unsupported group: {0}")]
    UnsupportedGroup(String),

    #[error("matrix file format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    TrainingDiverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
