//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes of paired inputs disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The ODE solver could not complete the requested integration.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Statistically degenerate input (e.g. zero variance where a ratio is needed).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// MCMC could not be started or continued.
    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
