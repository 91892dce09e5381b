use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("transition row ({state},{action}) is not a probability vector (sum = {sum})")]
    InvalidTransitionRow {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value iteration failed to reach tolerance after {iterations} iterations (residual = {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("history length mismatch at pair {pair}: expected {expected}, got {got}")]
    HistoryLength {
        pair: usize,
        expected: usize,
        got: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
