use alloc::string::String;

use crate::ensemble::Basis;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("offset undefined for an outcome with no detected photons")]
    UndefinedOffset,

    /// The truncated outcome grid does not carry enough probability mass.
    #[error("outcome grid truncated at n_max={n_max} only holds mass {mass:.3e}; raise n_max")]
    Truncation { n_max: u64, mass: f64 },

    #[error("N={n} exceeds the dense-matrix limit {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("basis mismatch: expected {expected:?}, found {found:?}")]
    BasisMismatch { expected: Basis, found: Basis },

    /// Outcome sequence that does not alternate z/x starting with z, or
    /// otherwise violates an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A structural guarantee (joint SVD, sector classification) failed to
    /// hold numerically. Indicates a bug or a mis-set threshold.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    IterationLimit { iterations: usize, residual: f64 },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
