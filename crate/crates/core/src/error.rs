//! Error type shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricerError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("singular matrix in {0}")]
    Singular(String),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("Picard iteration did not converge: residual {residual:.3e} after {iters} iterations")]
    PicardNoConvergence { residual: f64, iters: usize },
    #[error("validation failed: {0}")]
    ValidationFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PricerError>;
