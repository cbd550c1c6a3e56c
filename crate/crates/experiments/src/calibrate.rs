//! Fitting and persisting calibration records.

use std::fs;
use std::path::PathBuf;

use pgh_core::theory::{calibrate_constants, CalibrationPlan};
use pgh_core::Calibration;

use crate::config::ExperimentConfig;
use crate::error::ExpError;

/// Fits the constants for the scenario of `cfg` on its seeds and writes
/// `<kind>.calib` to `cfg.out`.
pub fn run_calibration(cfg: &ExperimentConfig) -> Result<(Calibration, PathBuf), ExpError> {
    let mut plan = CalibrationPlan::new(cfg.scenario()?, cfg.seeds.clone());
    plan.t_max = cfg.t_max;
    let cal = calibrate_constants(&plan)?;
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("{}.calib", cfg.kind().name()));
    cal.write(&path)?;
    Ok((cal, path))
}
