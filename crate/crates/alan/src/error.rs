//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// A file did not parse as the expected binary or manifest format.
    #[error("format: {0}")]
    Format(String),

    /// Inputs violated a documented precondition (bad lengths, ids out of
    /// range, empty sequences, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// Array dimensions disagreed with what a layer or routine expects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is out of its legal range or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// A computation produced NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A vector that must be normalized turned out to be exactly zero.
    #[error("zero vector: {0}")]
    ZeroVector(String),
}

pub type Result<T> = std::result::Result<T, Error>;
