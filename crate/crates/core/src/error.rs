use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while loading data, fitting or reading models.
#[derive(Debug, Error)]
pub enum BartError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("response column `{0}` not found")]
    MissingResponse(String),

    #[error("response column `{column}` has a missing value in row {row}")]
    MissingResponseValue { column: String, row: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("proposal infeasible: {0}")]
    Infeasible(&'static str),

    #[error("model archive version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt model archive: {0}")]
    CorruptArchive(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl BartError {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        BartError::Data(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        BartError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, BartError>;
