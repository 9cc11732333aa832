//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver failed to converge on a block of size {size} (g = {g}): {detail}")]
    EigensolverFailure { size: usize, g: f64, detail: String },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state construction failed: {0}")]
    StateConstruction(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("integrator failed: {0}")]
    Integrator(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
