//! Error types shared across the engine.

use thiserror::Error;

/// Errors produced by tensor ops, model construction, and data ingestion.
#[derive(Error, Debug)]
pub enum SgnError {
    /// Tensor or matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Invalid configuration value (hyperparameter, channel chain, class count).
    #[error("config error: {0}")]
    Config(String),
    /// A documented precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed or non-finite input data.
    #[error("data error: {0}")]
    Data(String),
    /// Non-finite values appeared during computation.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, SgnError>;
