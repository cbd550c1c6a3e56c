use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config error: {0}")]
    Config(String),

    #[error("calibration unavailable: {0}; run `pgh calibrate` first")]
    CalibrationMissing(String),

    #[error("run {run_id} diverged at t = {at}")]
    Diverged { run_id: String, at: usize },

    #[error("empty trace set: {0}")]
    EmptyTraces(String),

    #[error("malformed trace file {path}: {reason}")]
    Trace { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] pgh_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExpError {
    /// Process exit status: 2 config, 3 calibration, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::CalibrationMissing(_) => 3,
            Self::Diverged { .. } => 4,
            _ => 1,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T, ExpError> {
    Err(ExpError::Config(msg.into()))
}
