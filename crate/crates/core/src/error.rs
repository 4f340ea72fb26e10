//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. `field` is the flat path of
    /// the offending field (e.g. `prune.alpha`) so callers can surface it.
    #[error("{field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("unsupported bit width {bits}; expected 4 or 8")]
    UnsupportedBits { bits: u32 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error(
        "instance too large for exhaustive search: {rows} rows x {vectors} vectors \
         (limit {row_limit} x {vector_limit})"
    )]
    InstanceTooLarge {
        rows: usize,
        vectors: usize,
        row_limit: usize,
        vector_limit: usize,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn dimension_mismatch(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }
}
