use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("forgetting factor must lie in (0, 1], got {0}")]
    InvalidForgettingFactor(f64),

    #[error("dimension must be at least 1")]
    EmptyDimension,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no observations have been absorbed yet")]
    EmptyStream,

    #[error("regularization parameter must be non-negative, got {0}")]
    NegativeLambda(f64),

    #[error("binomial response must be 0 or 1, got {0}")]
    InvalidResponse(f64),

    #[error("active submatrix is singular on coordinates {0:?}")]
    SingularActiveSet(Vec<usize>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
