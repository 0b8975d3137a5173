//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by data ingestion, configuration, and the numeric stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A row is missing, duplicated, or out of order at the given hour-of-year.
    #[error("ingest error at hour index {index}: {reason}")]
    Ingest { index: usize, reason: String },

    /// A field value violates a domain invariant (negative power, bad decimal, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Inconsistent or incomplete configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/vector dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value reached a place that must stay finite.
    #[error("numerics error: {0}")]
    Numerics(String),

    /// A forecast was requested past the end of the available series.
    #[error("horizon error: {0}")]
    Horizon(String),

    /// A statistic is undefined for the given input (all-zero diffs, zero peak, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Checkpoint file is corrupt or does not match the requested architecture.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
