use std::io;

use thiserror::Error;

/// Errors produced by the blockcrypt library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("empty domain: {0}")]
    EmptyDomain(&'static str),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("expected {expected} channel(s), got {actual}")]
    Channels { expected: usize, actual: usize },

    #[error("value {value} out of range (max {max})")]
    OutOfRange { value: u32, max: u32 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform is not invertible: {0}")]
    NotInvertible(&'static str),

    #[error("malformed image: {0}")]
    Format(String),

    #[error("unsupported bit depth: maxval {0} (only 255 is supported)")]
    UnsupportedDepth(u32),

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by reading or parsing external files rather
    /// than by the transform parameters themselves.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Format(_)
                | Error::UnsupportedDepth(_)
                | Error::Truncated { .. }
                | Error::Json(_)
                | Error::Dataset(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
