//! Structural and bound invariants of small-instance solves.

use std::fs::{self, File};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::ExpError;
use crate::runner::{resolve_constants, run_sweep, RunOutcome};

/// Absolute slack of the bound comparisons.
pub const BOUND_SLACK: f64 = 1e-12;

pub const LEAKAGE: &str = "leakage";
pub const MAJORIZATION: &str = "majorization";
pub const TERMINAL_BOUND: &str = "terminal_bound";
pub const BOUNDED: &str = "bounded";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantRow {
    pub kind: &'static str,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub invariant: &'static str,
    pub passed: bool,
    /// Largest leakage, or largest excess of the error over its bound.
    pub worst: f64,
}

#[derive(Clone, Debug, Default)]
pub struct InvariantReport {
    pub rows: Vec<InvariantRow>,
    pub runs: Vec<RunOutcome>,
    pub files: Vec<PathBuf>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn violations(&self, invariant: &str) -> usize {
        self.rows.iter().filter(|r| r.invariant == invariant && !r.passed).count()
    }

    pub fn checked(&self, invariant: &str) -> usize {
        self.rows.iter().filter(|r| r.invariant == invariant).count()
    }
}

/// Leakage limit: `s` spurious entries or groups, or rank `2r`.
fn leakage_limit(kind: ProblemKind, level: usize) -> usize {
    match kind {
        ProblemKind::LowRank => 2 * level,
        _ => level,
    }
}

/// Checks one run:
///
/// * leakage stays below its limit at every iterate,
/// * `||x_t - x*|| <= Delta_t` at every iterate,
/// * the final error obeys `rho^t Delta_0 + xi delta / ((1 - rho) m)`,
/// * the run did not diverge.
pub fn check_run(run: &RunOutcome) -> Vec<InvariantRow> {
    let cfg = &run.config;
    let limit = leakage_limit(run.kind, cfg.structure.level());
    // Relative errors are absolute for the zero signal.
    let scale = if run.truth_norm > 0.0 { run.truth_norm } else { 1.0 };
    let abs_error = |rel: Option<f64>| rel.map_or(f64::INFINITY, |e| e * scale);

    let max_leak = run.trace.iter().map(|r| r.leakage.unwrap_or(usize::MAX)).max().unwrap_or(0);
    let majorization_excess = run
        .trace
        .iter()
        .map(|r| abs_error(r.rel_error) - r.delta_t)
        .fold(f64::NEG_INFINITY, f64::max);
    let terminal_excess = run.trace.last().map_or(f64::INFINITY, |last| {
        let delta0 = cfg.delta0.unwrap_or(run.truth_norm);
        let noise = cfg.xi * cfg.delta;
        let floor = if noise == 0.0 { 0.0 } else { noise / ((1.0 - cfg.rho) * run.m as f64) };
        abs_error(last.rel_error) - (cfg.rho.powi(last.t as i32) * delta0 + floor)
    });

    let row = |invariant, passed, worst| InvariantRow {
        kind: run.kind.name(),
        m: run.m,
        sigma: run.sigma,
        seed: run.seed,
        invariant,
        passed,
        worst,
    };
    vec![
        row(LEAKAGE, max_leak < limit, max_leak as f64),
        row(MAJORIZATION, majorization_excess <= BOUND_SLACK, majorization_excess),
        row(TERMINAL_BOUND, terminal_excess <= BOUND_SLACK, terminal_excess),
        row(BOUNDED, run.diverged_at.is_none(), run.diverged_at.map_or(0.0, |t| t as f64)),
    ]
}

/// Solves every `(sigma, m, seed)` of `cfg` and checks each run; writes
/// `invariants_<kind>.csv` to `cfg.out`.
pub fn run_invariant_suite(cfg: &ExperimentConfig) -> Result<InvariantReport, ExpError> {
    let constants = resolve_constants(cfg)?;
    let runs = run_sweep(cfg, &constants)?;
    let rows: Vec<InvariantRow> = runs.iter().flat_map(check_run).collect();
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("invariants_{}.csv", cfg.kind().name()));
    let mut w = csv::Writer::from_writer(File::create(&path)?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(InvariantReport { rows, runs, files: vec![path] })
}
