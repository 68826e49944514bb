use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    /// An exponential spectrum asked for more eigenvalues than double precision can hold.
    #[error("spectrum truncated: lambda_{index} falls below {floor:e}; at most {max_len} eigenvalues are representable")]
    Truncation {
        index: usize,
        max_len: usize,
        floor: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tail block is empty: M = {m} must exceed N = {n}")]
    InsufficientTail { m: usize, n: usize },

    #[error("cannot aggregate an empty record list")]
    EmptyReport,

    /// `location` names where the value came from: `line 3`, `flag --trials`, ...
    #[error("config error at {location}, key `{key}`: {message}")]
    Config {
        location: String,
        key: String,
        message: String,
    },

    #[error("plot field `{0}` is not populated in this report")]
    PlotField(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for the command-line front end: 2 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Truncation { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
