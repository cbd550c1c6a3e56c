//! Scenario runs shared by the figure and invariant suites.

use std::io::ErrorKind;

use pgh_core::homotopy::default_delta0;
use pgh_core::par::map_slice;
use pgh_core::theory::{oracle_config, Instance, OracleOptions, TrackingScenario};
use pgh_core::{Calibration, Error as CoreError, HomotopyConfig, IterateRecord, StopReason};

use crate::config::{ConstantSource, Delta0Source, ExperimentConfig, ProblemKind};
use crate::error::{config_err, ExpError};

/// Solver constants resolved once per suite.
#[derive(Clone, Debug)]
pub enum Constants {
    Calibrated(Calibration),
    Explicit { rho: f64, rho_restricted: f64, xi: f64, xi_restricted: f64 },
    Oracle { trials: usize, safety: f64 },
}

/// Loads the calibration record, if any, and checks it fits the scenario.
pub fn resolve_constants(cfg: &ExperimentConfig) -> Result<Constants, ExpError> {
    Ok(match &cfg.constants {
        ConstantSource::Calibrated { path } => {
            let cal = Calibration::read(path).map_err(|e| {
                let what = match &e {
                    CoreError::Io(io) if io.kind() == ErrorKind::NotFound => "no record".to_string(),
                    other => other.to_string(),
                };
                ExpError::CalibrationMissing(format!("{}: {what}", path.display()))
            })?;
            let scenario = cfg.scenario()?;
            if cal.scenario_fingerprint != scenario.fingerprint(cal.eta) {
                return Err(ExpError::CalibrationMissing(format!(
                    "{} was fitted for a different scenario (kind, family or dimensions)",
                    path.display()
                )));
            }
            Constants::Calibrated(cal)
        }
        &ConstantSource::Explicit { rho, rho_restricted, xi, xi_restricted } => {
            Constants::Explicit { rho, rho_restricted, xi, xi_restricted }
        }
        &ConstantSource::Oracle { trials, safety } => Constants::Oracle { trials, safety },
    })
}

/// One solve of the sweep.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub kind: ProblemKind,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub trace: Vec<IterateRecord>,
    /// `None` when the run diverged.
    pub reason: Option<StopReason>,
    pub diverged_at: Option<usize>,
    pub truth_norm: f64,
    pub config: HomotopyConfig,
}

impl RunOutcome {
    pub fn final_rel_error(&self) -> Option<f64> {
        self.trace.last().and_then(|r| r.rel_error)
    }

    pub fn slope(&self) -> Option<f64> {
        pgh_core::homotopy::log_error_slope(&self.trace)
    }
}

pub fn noise_label(sigma: f64) -> String {
    if sigma == 0.0 {
        "noiseless".to_string()
    } else {
        format!("sigma{sigma}")
    }
}

pub fn run_id(kind: ProblemKind, sigma: f64, m: usize, seed: u64) -> String {
    format!("{}_{}_m{m}_seed{seed}", kind.name(), noise_label(sigma))
}

/// Solves one drawn instance with the suite's constants.
pub fn solve_instance(
    cfg: &ExperimentConfig,
    constants: &Constants,
    scenario: &TrackingScenario,
    instance: &Instance,
    sigma: f64,
    seed: u64,
) -> Result<RunOutcome, ExpError> {
    let (op, obs) = (&instance.op, &instance.obs);
    let m = op.rows();
    let truth_norm = instance.truth.norm();
    let delta0 = match cfg.delta0 {
        Delta0Source::Truth => truth_norm,
        Delta0Source::Data => default_delta0(op, obs)?,
    };
    // A zero signal admits any positive initial bound.
    let delta0 = if delta0 > 0.0 { delta0 } else { 1.0 };
    let config = match *constants {
        Constants::Calibrated(ref cal) => cal.config(scenario, op, obs, delta0, cfg.t_max)?,
        Constants::Explicit { rho, rho_restricted, xi, xi_restricted } => {
            let mut c = HomotopyConfig::new(scenario.structure(), m);
            c.delta0 = Some(delta0);
            c.rho = rho;
            c.rho_restricted = rho_restricted;
            c.xi = xi;
            c.xi_restricted = xi_restricted;
            c.delta = obs.delta;
            c.t_max = cfg.t_max;
            c
        }
        Constants::Oracle { trials, safety } => oracle_config(
            op,
            obs,
            &scenario.structure(),
            delta0,
            cfg.t_max,
            OracleOptions { trials, seed, safety },
        )?,
    };
    let (trace, reason, diverged_at) = match instance.solve(&config) {
        Ok(res) => (res.trace, Some(res.reason), None),
        Err(CoreError::Diverged { at, trace }) => (trace, None, Some(at)),
        Err(e) => return Err(e.into()),
    };
    let mut trace = trace;
    if !cfg.timing {
        trace.iter_mut().for_each(|r| r.wall_time_ns = 0);
    }
    Ok(RunOutcome {
        run_id: run_id(cfg.kind(), sigma, m, seed),
        kind: cfg.kind(),
        m,
        sigma,
        seed,
        trace,
        reason,
        diverged_at,
        truth_norm,
        config,
    })
}

/// Every `(sigma, m, seed)` combination of `cfg`, solved in parallel, in
/// sigma-major, then m, then seed order.
pub fn run_sweep(cfg: &ExperimentConfig, constants: &Constants) -> Result<Vec<RunOutcome>, ExpError> {
    let scenario = cfg.scenario()?;
    if let Constants::Calibrated(cal) = constants {
        if let Some(&m) = cfg.m.iter().find(|&&m| cal.rho(m) >= 1.0) {
            return config_err(format!(
                "calibrated contraction factor {:.3} at m = {m} does not contract; use more measurements",
                cal.rho(m)
            ));
        }
    }
    let jobs: Vec<(f64, usize, u64)> = cfg
        .sigma
        .iter()
        .flat_map(|&sigma| {
            cfg.m.iter().flat_map(move |&m| cfg.seeds.iter().map(move |&seed| (sigma, m, seed)))
        })
        .collect();
    map_slice(&jobs, |&(sigma, m, seed)| {
        let instance = scenario.draw(m, sigma, seed)?;
        solve_instance(cfg, constants, &scenario, &instance, sigma, seed)
    })
    .into_iter()
    .collect()
}
