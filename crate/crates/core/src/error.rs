use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group order {0}: must be at least 1")]
    InvalidOrder(usize),

    #[error("group index {index} out of range for order {order}")]
    GroupIndex { index: usize, order: usize },

    #[error("group order mismatch: expected {expected}, got {actual}")]
    GroupMismatch { expected: usize, actual: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("unknown primitive `{0}`")]
    Catalogue(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("parse error in {path} at byte {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit status for command-line front ends: 2 for I/O, 3 for
    /// malformed data or checkpoints, 4 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Shape(_)
            | Error::UndefinedMetric(_) => 3,
            Error::NonFinite { .. } | Error::Evaluation(_) => 4,
            _ => 1,
        }
    }
}
