//! Error type shared by all modules of the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, KmpError>;

#[derive(Debug, Error)]
pub enum KmpError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {col}: cannot parse {token:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
    },

    #[error("{path}: row {row}, column {col}: non-finite value")]
    NonFinite { path: PathBuf, row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported check: {0}")]
    UnsupportedCheck(String),

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("degenerate objective: {0}")]
    DegenerateObjective(String),

    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("model format version {found} not supported (this build reads version {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("model file corrupt: {0}")]
    ModelCorrupt(String),

    #[error("model checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ModelChecksum { stored: u64, computed: u64 },
}
