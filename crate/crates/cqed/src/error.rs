//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CqedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator dimensions do not match")]
    DimensionMismatch,

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("Fock truncation overflow: {0}")]
    TruncationOverflow(String),

    #[error("integration failure: {0}")]
    SolverFailure(String),

    #[error("fixed-point iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
