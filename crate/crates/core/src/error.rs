use thiserror::Error;

use crate::homotopy::IterateRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("signal kind mismatch: {0}")]
    KindMismatch(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Exhaustive support enumeration would exceed the work budget; use the
    /// Monte-Carlo estimator instead.
    #[error(
        "enumeration of {required} support pairs exceeds the budget of {budget}; \
         use rho_monte_carlo for this cone"
    )]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("iterate diverged at t = {at}")]
    Diverged { at: usize, trace: Vec<IterateRecord> },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed calibration record: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
