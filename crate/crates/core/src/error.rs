use thiserror::Error;

/// Errors raised by the library. Every variant is a precondition or
/// resource failure; numerical verdicts are reported through the report
/// types instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mean is infinite for {0}")]
    InfiniteMean(String),

    #[error("law is not tagged long-tailed: {0}")]
    NotLongTailed(String),

    #[error("Kesten constant c = {c} must exceed the projection mean {mean}")]
    ViolatesKesten { c: f64, mean: f64 },

    #[error("counting variable exceeded {limit} terms on one path")]
    TauOverflow { limit: u64 },

    #[error("counting process exceeded {limit} arrivals on one path")]
    ArrivalOverflow { limit: u64 },

    #[error("operation requires a {expected} vector law")]
    KindMismatch { expected: &'static str },

    #[error("tail index {alpha} <= 1: mean not finite")]
    MeanNotFinite { alpha: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
