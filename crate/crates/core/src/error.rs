use thiserror::Error;

/// Errors raised by the toolkit. Rate evaluators never error on values
/// outside their effective domain; they return `f64::INFINITY` instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tilt parameter {theta} is outside the open CGF domain ({lo}, {hi})")]
    TiltOutsideDomain { theta: f64, lo: f64, hi: f64 },

    #[error("arrival epochs are not sorted at index {index}")]
    UnsortedEpochs { index: usize },

    #[error("arrival distribution is not strictly increasing and continuous")]
    NotStrictlyIncreasing,

    #[error("partition is invalid: {0}")]
    InvalidPartition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
