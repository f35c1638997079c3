use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("datastore is sealed")]
    StoreSealed,

    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("format error: {0}")]
    Format(String),

    /// No neighbors were retrieved; callers fall back to the base distribution.
    #[error("empty neighborhood")]
    EmptyNeighborhood,

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by bad or corrupt input data rather than misuse.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Io(_) | Error::Json(_))
    }
}
