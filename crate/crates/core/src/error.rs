use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient history: need at least {needed} observations, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("empty history")]
    EmptyHistory,

    #[error("dimension mismatch: segment {segment} has {got} coefficients, expected {expected}")]
    DimensionMismatch {
        segment: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: value {value} is not positive, cannot take logarithm")]
    NonPositiveValueForLog {
        path: PathBuf,
        row: usize,
        value: f64,
    },

    #[error("{path}: row {row}: {reason}")]
    UnparseableRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("non-finite observation at step {step}")]
    NonFiniteObservation { step: usize },

    #[error("empty trace")]
    EmptyTrace,

    #[error("empty suite: {0}")]
    EmptySuite(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
