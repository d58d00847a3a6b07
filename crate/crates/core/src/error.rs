use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A size, fraction or other numeric argument is outside its supported set.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("random source failed: {0}")]
    Entropy(String),

    /// A peer public value (or the group it came with) was rejected.
    #[error("key validation failed: {0}")]
    KeyValidation(String),

    /// Malformed or oversized frame. `offset` is the byte position where decoding stopped.
    #[error("frame error at byte {offset}: {reason}")]
    Frame { offset: usize, reason: String },

    #[error("timed out waiting on {0}")]
    Timeout(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Operation not allowed in the current handshake phase.
    #[error("invalid state: {0}")]
    State(String),

    #[error("no successful records to plot")]
    EmptyData,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn frame(offset: usize, reason: impl Into<String>) -> Self {
        Error::Frame { offset, reason: reason.into() }
    }
}
