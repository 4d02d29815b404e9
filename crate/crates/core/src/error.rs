use std::io;

use thiserror::Error;

pub type Result<T, E = LeapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LeapError {
    /// Caller supplied an argument outside an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A file or record could not be parsed or failed validation.
    #[error("format error: {0}")]
    Format(String),

    #[error("enumeration bound exceeded: {needed} > {limit}")]
    BoundExceeded { needed: u128, limit: u128 },

    #[error("decoding already complete: no masked positions remain")]
    Complete,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LeapError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LeapError::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        LeapError::Format(msg.into())
    }
}

impl From<serde_json::Error> for LeapError {
    fn from(err: serde_json::Error) -> Self {
        LeapError::Format(err.to_string())
    }
}
