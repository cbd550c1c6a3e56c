//! Convergence sweeps over measurement counts and noise levels.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, ProblemKind, Suite};
use crate::error::{config_err, ExpError};
use crate::runner::{noise_label, resolve_constants, run_sweep, RunOutcome};
use crate::trace::{write_trace_file, TraceRow};

#[derive(Clone, Debug)]
pub struct FigureOutcome {
    pub config: ExperimentConfig,
    /// Human-readable constant source.
    pub source: String,
    pub runs: Vec<RunOutcome>,
    /// Trace files, one per `(noise, m)` group, then the summary table.
    pub files: Vec<PathBuf>,
}

impl FigureOutcome {
    pub fn run(&self, sigma: f64, m: usize, seed: u64) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.sigma == sigma && r.m == m && r.seed == seed)
    }

    pub fn first_divergence(&self) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.diverged_at.is_some())
    }

    pub fn summary(&self) -> Vec<RunSummary> {
        self.runs.iter().map(RunSummary::from).collect()
    }
}

/// One line of the slope table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub kind: String,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub iterations: usize,
    pub stop: String,
    pub final_rel_error: Option<f64>,
    /// OLS slope of `ln rel_error` over the linear phase.
    pub slope: Option<f64>,
}

impl From<&RunOutcome> for RunSummary {
    fn from(r: &RunOutcome) -> Self {
        let stop = match (r.reason, r.diverged_at) {
            (_, Some(at)) => format!("diverged@{at}"),
            (Some(reason), None) => format!("{reason:?}"),
            (None, None) => String::new(),
        };
        Self {
            run_id: r.run_id.clone(),
            kind: r.kind.name().to_string(),
            m: r.m,
            sigma: r.sigma,
            seed: r.seed,
            iterations: r.trace.last().map_or(0, |row| row.t),
            stop,
            final_rel_error: r.final_rel_error(),
            slope: r.slope(),
        }
    }
}

pub fn trace_file_name(kind: ProblemKind, sigma: f64, m: usize) -> String {
    format!("trace_{}_{}_m{m}.csv", kind.name(), noise_label(sigma))
}

/// Sparse suite: `n = 2000`, `s = 5`, `m` in 800, 1300, 1800 by default.
pub fn run_figure1(cfg: &ExperimentConfig) -> Result<FigureOutcome, ExpError> {
    expect_kind(cfg, ProblemKind::Sparse)?;
    run_figure(cfg)
}

/// Group-sparse suite: 500 groups of 5 entries, `s = 5`, `m` in 1200, 1800, 2400.
pub fn run_figure2(cfg: &ExperimentConfig) -> Result<FigureOutcome, ExpError> {
    expect_kind(cfg, ProblemKind::Group)?;
    run_figure(cfg)
}

/// Low-rank suite: `d = 50`, `r = 2`, `m` in 40^2, 44^2, 48^2.
pub fn run_figure3(cfg: &ExperimentConfig) -> Result<FigureOutcome, ExpError> {
    expect_kind(cfg, ProblemKind::LowRank)?;
    run_figure(cfg)
}

fn expect_kind(cfg: &ExperimentConfig, kind: ProblemKind) -> Result<(), ExpError> {
    if cfg.kind() != kind {
        return config_err(format!("this suite runs {} problems, config has {}", kind.name(), cfg.kind().name()));
    }
    Ok(())
}

/// Runs the sweep of `cfg` and writes its trace files and slope table to `cfg.out`.
///
/// Divergent runs are kept in the outcome and in the files; callers decide
/// whether to fail.
pub fn run_figure(cfg: &ExperimentConfig) -> Result<FigureOutcome, ExpError> {
    if matches!(cfg.suite, Suite::Invariants | Suite::Calibrate) {
        return config_err(format!("{} is not a figure suite", cfg.suite.name()));
    }
    let constants = resolve_constants(cfg)?;
    let runs = run_sweep(cfg, &constants)?;
    let mut outcome = FigureOutcome {
        config: cfg.clone(),
        source: cfg.constants.describe(),
        runs,
        files: Vec::new(),
    };
    outcome.files = write_outputs(&outcome, &cfg.out)?;
    Ok(outcome)
}

fn write_outputs(outcome: &FigureOutcome, dir: &Path) -> Result<Vec<PathBuf>, ExpError> {
    fs::create_dir_all(dir)?;
    let cfg = &outcome.config;
    let mut files = Vec::new();
    for &sigma in &cfg.sigma {
        for &m in &cfg.m {
            let rows: Vec<TraceRow> = outcome
                .runs
                .iter()
                .filter(|r| r.sigma == sigma && r.m == m)
                .flat_map(|r| {
                    r.trace.iter().map(|rec| TraceRow::new(&r.run_id, r.kind.name(), r.m, r.seed, rec))
                })
                .collect();
            let path = dir.join(trace_file_name(cfg.kind(), sigma, m));
            write_trace_file(&path, &rows)?;
            files.push(path);
        }
    }
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(File::create(&path)?);
    for row in outcome.summary() {
        w.serialize(row)?;
    }
    w.flush()?;
    files.push(path);
    Ok(files)
}
