//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Matrix/vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input violates a documented invariant.
    #[error("invalid input: {0}")]
    Validation(String),

    /// The request exceeds a hard size guard.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A quantity that must be real or bounded came out outside tolerance.
    #[error("numerical consistency violated: {0}")]
    NumericalConsistency(String),

    /// A state set collapsed below the rank tolerance in strict mode.
    #[error("degenerate state set: {0}")]
    Degeneracy(String),

    /// A ratio whose denominator vanished.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
}

pub type Result<T> = std::result::Result<T, Error>;
