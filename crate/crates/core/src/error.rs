use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the domain where a quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The scenario or a policy is configured inconsistently.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data (trace, generator parameters) violates a structural constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// A relayed quantity was missing when the protocol required it.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Internal bookkeeping went out of sync; indicates a bug.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// The requested mode is not supported for this geometry or algorithm.
    #[error("unsupported mode: {0}")]
    Unsupported(String),

    /// A degenerate numeric input (zero variation, empty sequence, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A scenario file failed to parse.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// True for errors that stem from user configuration rather than a failed check.
    pub fn is_configuration(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
