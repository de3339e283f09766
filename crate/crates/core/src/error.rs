use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix of size {size} is not positive definite (jitter escalated to {max_jitter:e})")]
    Conditioning { size: usize, max_jitter: f64 },

    #[error("objective returned non-finite value {value} at {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("unknown objective `{name}` (valid: {valid})")]
    UnknownObjective { name: String, valid: String },

    #[error("unknown algorithm `{0}` (expected ucb|pi|ei with optional -pp01|-pp001|-pp0001 suffix)")]
    UnknownAlgorithm(String),

    #[error("regret bound requires a theory-mode trace with unit kernel amplitude")]
    NotTheoryMode,

    #[error(transparent)]
    External(#[from] ExternalError),

    #[error("ragged results, missing cells: {0}")]
    RaggedResults(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

/// Failures of the subprocess objective protocol.
#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("`{command}` exited with status {code:?}")]
    Exit { command: String, code: Option<i32> },

    #[error("`{command}` timed out after {secs} s")]
    Timeout { command: String, secs: f64 },

    #[error("could not parse objective value from output {output:?}")]
    Parse { output: String },

    #[error("i/o with child process: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
