use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weights are not on the simplex: {0}")]
    NotSimplex(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("awake set is invalid: {0}")]
    InvalidAwakeSet(String),

    #[error("compound expert {expert} is asleep at round {round}")]
    CompoundAsleep { round: usize, expert: usize },

    #[error("class {class} has zero climatological probability")]
    ZeroMarginal { class: usize },

    #[error("forest is missing node cover statistics")]
    MissingCover,

    #[error("oracle mode requires the true error class at round {0}")]
    OracleUnavailable(usize),

    #[error("{path}:{line}: {reason}")]
    Ingest { path: PathBuf, line: u64, reason: String },

    #[error("stream {stream} failed at round {round}: {source}")]
    Stream { stream: String, round: usize, source: Box<Error> },

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
