//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by profile parsing, scenario validation, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// DNN profile document violates an invariant; carries the layer index.
    #[error("profile error at layer {index}: {message}")]
    Profile { index: usize, message: String },

    /// Scenario configuration is inconsistent or out of range.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Partition indices do not satisfy 0 <= l1 <= l2 <= L.
    #[error("partition pair ({l1}, {l2}) out of range for profile with last index {last}")]
    PartitionOutOfRange { l1: usize, l2: usize, last: usize },

    /// Exhaustive search would exceed the evaluation budget.
    #[error("search space of {evals} evaluations exceeds budget {budget}")]
    BudgetExceeded { evals: u128, budget: u128 },

    /// A numeric operation failed (singular matrix, non-finite input, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("sweep error: {0}")]
    Sweep(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
