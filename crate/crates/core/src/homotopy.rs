//! Proximal-gradient homotopy solvers and the projected-gradient baseline.
//!
//! Every solver starts from zero and alternates a gradient step on
//! `0.5 * ||A x - y||^2` with a proximal step whose threshold `lambda_t * mu`
//! follows the bound recursion `Delta_{t+1} = rho * Delta_t + xi * delta / m`:
//!
//! ```text
//! lambda_t = (xi_r * delta + rho_r * Delta_t / mu) / sqrt(k)
//! ```
//!
//! where `k` is the sparsity, active group count, or rank. The schedule keeps
//! the number of spurious coordinates (groups, rank) of each iterate below
//! `k` as long as `rho_r`, `xi_r` upper-bound the restricted singular values
//! of the problem and `Delta_t` upper-bounds the error.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, norm1, norm2, sorted_svd};
use crate::prox::{group_soft_threshold_in_place, project_l1_ball_in_place, soft_threshold_in_place};
use crate::sensing::{Observation, SensingMode, SensingOperator};
use crate::signals::{
    default_zero_tol, group_leakage, support_leakage, GroupPartition, SignalKind, SignalValues,
    StructuredSignal, DEFAULT_RANK_TOL,
};

/// Iterates whose norm exceeds this multiple of `Delta_0` abort the run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

pub const DEFAULT_REL_CHANGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    Sparse { s: usize },
    Group { partition: GroupPartition, s: usize },
    LowRank { r: usize },
}

impl Structure {
    /// Sparsity, active group count, or rank.
    pub fn level(&self) -> usize {
        match self {
            Self::Sparse { s } | Self::Group { s, .. } => *s,
            Self::LowRank { r } => *r,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sparse { .. } => "sparse",
            Self::Group { .. } => "group",
            Self::LowRank { .. } => "lowrank",
        }
    }
}

/// Solver inputs: the bound recursion, the schedule constants, and the budget.
#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyConfig {
    /// Initial error bound; estimated from the data when `None`.
    pub delta0: Option<f64>,
    /// Contraction factor of the bound recursion.
    pub rho: f64,
    /// Restricted singular value in the schedule (`rho_{s,2s}` or `rho_{r,3r}`).
    pub rho_restricted: f64,
    /// Noise amplification of the bound recursion.
    pub xi: f64,
    /// Restricted noise correlation in the schedule (`xi_s` or `xi_r`).
    pub xi_restricted: f64,
    /// l2 bound on the noise.
    pub delta: f64,
    pub step_mu: f64,
    pub structure: Structure,
    pub t_max: usize,
    /// Stop once `||x_{t+1} - x_t|| <= tol * ||x_{t+1}||`.
    pub rel_change_tol: Option<f64>,
    /// Stop once the relative error drops below this value (needs the truth).
    pub target_error: Option<f64>,
    /// Accept `rho >= 1`. The recursion is still a valid bound, only not a
    /// contracting one; used when exact constants of a small instance exceed one.
    pub allow_noncontractive: bool,
}

impl HomotopyConfig {
    /// Zero noise, zero schedule constants, `mu = 1/m`, `rho = 0.5`, 500 iterations.
    pub fn new(structure: Structure, m: usize) -> Self {
        Self {
            delta0: None,
            rho: 0.5,
            rho_restricted: 0.0,
            xi: 0.0,
            xi_restricted: 0.0,
            delta: 0.0,
            step_mu: 1.0 / m.max(1) as f64,
            structure,
            t_max: 500,
            rel_change_tol: Some(DEFAULT_REL_CHANGE_TOL),
            target_error: None,
            allow_noncontractive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.rho) {
            return invalid(format!("rho must be finite and nonnegative, got {}", self.rho));
        }
        if self.rho >= 1.0 && !self.allow_noncontractive {
            return invalid(format!("rho must be < 1 for a contracting bound, got {}", self.rho));
        }
        for (name, v) in [
            ("rho_restricted", self.rho_restricted),
            ("xi", self.xi),
            ("xi_restricted", self.xi_restricted),
            ("delta", self.delta),
        ] {
            if !nonneg(v) {
                return invalid(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.step_mu > 0.0 && self.step_mu.is_finite()) {
            return invalid(format!("step size must be positive, got {}", self.step_mu));
        }
        if let Some(d0) = self.delta0 {
            if !(d0 > 0.0 && d0.is_finite()) {
                return invalid(format!("delta0 must be positive, got {d0}"));
            }
        }
        if self.structure.level() == 0 {
            return invalid("structure level (s or r) must be positive");
        }
        Ok(())
    }
}

/// One row of the solver trace, describing iterate `x_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub t: usize,
    /// Weight used to produce `x_{t+1}` from `x_t`.
    pub lambda_t: f64,
    pub delta_t: f64,
    /// `||x_t - x*|| / ||x*||` (absolute error when `x* = 0`).
    pub rel_error: Option<f64>,
    /// Spurious support size, spurious group count, or numerical rank.
    pub leakage: Option<usize>,
    /// `lambda_t * R(x_t) + 0.5 * ||A x_t - y||^2`
    pub objective: f64,
    pub wall_time_ns: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    RelativeChange,
    TargetError,
    LambdaUnderflow,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub estimate: SignalValues,
    pub trace: Vec<IterateRecord>,
    pub converged: bool,
    pub reason: StopReason,
    pub delta0: f64,
    /// `Delta_0` came from the data-driven default rather than the config.
    pub delta0_estimated: bool,
    pub warnings: Vec<String>,
}

impl RecoveryResult {
    pub fn final_rel_error(&self) -> Option<f64> {
        self.trace.last().and_then(|r| r.rel_error)
    }
}

/// `(xi_r * delta + rho_r * Delta_t / mu) / sqrt(k)` for the configured structure.
pub fn lambda_schedule(config: &HomotopyConfig, delta_t: f64) -> Result<f64> {
    let k = config.structure.level();
    if k == 0 {
        return invalid("structure level must be positive");
    }
    if !(delta_t >= 0.0) {
        return invalid(format!("Delta_t must be nonnegative, got {delta_t}"));
    }
    Ok((config.xi_restricted * config.delta + config.rho_restricted * delta_t / config.step_mu)
        / (k as f64).sqrt())
}

/// Schedule for sparse and group-sparse structures (`k = s`).
pub fn lambda_schedule_sparse(config: &HomotopyConfig, delta_t: f64) -> Result<f64> {
    match config.structure {
        Structure::Sparse { .. } | Structure::Group { .. } => lambda_schedule(config, delta_t),
        Structure::LowRank { .. } => Err(Error::KindMismatch("sparse schedule on low-rank config")),
    }
}

/// Schedule for low-rank structures (`k = r`).
pub fn lambda_schedule_lowrank(config: &HomotopyConfig, delta_t: f64) -> Result<f64> {
    match config.structure {
        Structure::LowRank { .. } => lambda_schedule(config, delta_t),
        _ => Err(Error::KindMismatch("low-rank schedule on vector config")),
    }
}

/// `rho * Delta_t + xi * delta / m`
pub fn delta_update(config: &HomotopyConfig, delta_t: f64, m: usize) -> f64 {
    config.rho * delta_t + config.xi * config.delta / m as f64
}

/// Data-driven over-estimate of `||x*||`: `||A^T y|| / m * sqrt(n)`.
pub fn default_delta0(op: &SensingOperator, obs: &Observation) -> Result<f64> {
    let aty = op.apply_adjoint(&obs.y)?;
    Ok(norm2(&aty) / op.rows() as f64 * (op.cols() as f64).sqrt())
}

/// OLS slope of `ln rel_error` against `t` over the linear phase.
///
/// The window keeps rows with `10 * floor < rel_error < 0.1 * initial`, where
/// `floor` is the smallest recorded error. `None` without truth or with fewer
/// than three rows in the window.
pub fn log_error_slope(trace: &[IterateRecord]) -> Option<f64> {
    let errors: Vec<f64> = trace.iter().map(|r| r.rel_error).collect::<Option<_>>()?;
    let initial = *errors.first()?;
    let floor = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let points: Vec<(f64, f64)> = trace
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > 10.0 * floor && e < 0.1 * initial)
        .map(|(r, &e)| (r.t as f64, e.ln()))
        .collect();
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_e = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_e)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    Some(sxy / sxx)
}

enum Prox<'a> {
    L1,
    Group(&'a GroupPartition),
    Nuclear { side: usize },
    L1Ball { radius: f64 },
}

/// Regularizer value and (for nuclear) numerical rank of the prox output.
struct ProxOutcome {
    reg: f64,
    rank: Option<usize>,
}

impl Prox<'_> {
    fn apply(&self, z: &mut [f64], tau: f64) -> ProxOutcome {
        match self {
            Self::L1 => {
                soft_threshold_in_place(z, tau);
                ProxOutcome { reg: norm1(z), rank: None }
            }
            Self::Group(p) => {
                group_soft_threshold_in_place(z, tau, p);
                ProxOutcome { reg: p.group_norms(z).iter().sum(), rank: None }
            }
            Self::Nuclear { side } => {
                let m = DMatrix::from_column_slice(*side, *side, z);
                let svd = sorted_svd(&m);
                let shrunk: Vec<f64> =
                    svd.singular_values.iter().map(|s| (s - tau).max(0.0)).collect();
                let mut out = DMatrix::zeros(*side, *side);
                for (k, &s) in shrunk.iter().enumerate() {
                    if s == 0.0 {
                        break;
                    }
                    out.ger(s, &svd.u.column(k), &svd.v_t.row(k).transpose(), 1.0);
                }
                z.copy_from_slice(out.as_slice());
                let top = shrunk.first().copied().unwrap_or(0.0);
                let rank = if top > 0.0 {
                    shrunk.iter().filter(|&&s| s > DEFAULT_RANK_TOL * top).count()
                } else {
                    0
                };
                ProxOutcome { reg: shrunk.iter().sum(), rank: Some(rank) }
            }
            Self::L1Ball { radius } => {
                project_l1_ball_in_place(z, *radius);
                ProxOutcome { reg: 0.0, rank: None }
            }
        }
    }
}

struct TruthView<'a> {
    signal: &'a StructuredSignal,
    flat: Vec<f64>,
    norm: f64,
}

impl TruthView<'_> {
    fn rel_error(&self, x: &[f64]) -> f64 {
        let e = dist2(x, &self.flat);
        if self.norm > 0.0 {
            e / self.norm
        } else {
            e
        }
    }
}

struct Problem<'a> {
    prox: Prox<'a>,
    truth: Option<TruthView<'a>>,
}

impl Problem<'_> {
    fn leakage(&self, x: &[f64], outcome: &ProxOutcome) -> Result<Option<usize>> {
        let Some(truth) = &self.truth else { return Ok(None) };
        let tol = default_zero_tol(x);
        Ok(Some(match &self.prox {
            Prox::L1 | Prox::L1Ball { .. } => match truth.signal.kind {
                SignalKind::Sparse { .. } => support_leakage(x, truth.signal, tol)?,
                _ => return Ok(None),
            },
            Prox::Group(p) => group_leakage(x, truth.signal, p, tol)?,
            Prox::Nuclear { .. } => outcome.rank.unwrap_or(0),
        }))
    }
}

struct Homotopy<'a> {
    config: &'a HomotopyConfig,
}

fn check_truth(truth: Option<&StructuredSignal>, n: usize, want: &'static str) -> Result<()> {
    if let Some(t) = truth {
        let ok = matches!(
            (&t.kind, want),
            (SignalKind::Sparse { .. }, "sparse")
                | (SignalKind::GroupSparse { .. }, "group")
                | (SignalKind::LowRank { .. }, "lowrank")
        );
        if !ok {
            return Err(Error::KindMismatch("truth kind does not match the solver"));
        }
        if t.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.dim() });
        }
    }
    Ok(())
}

fn check_obs(op: &SensingOperator, obs: &Observation) -> Result<()> {
    if obs.y.len() != op.rows() {
        return Err(Error::DimensionMismatch { expected: op.rows(), got: obs.y.len() });
    }
    Ok(())
}

/// Proximal-gradient homotopy for sparse vectors (l1 prox).
pub fn run_sparse_homotopy(
    op: &SensingOperator,
    obs: &Observation,
    config: &HomotopyConfig,
    truth: Option<&StructuredSignal>,
) -> Result<RecoveryResult> {
    if !matches!(config.structure, Structure::Sparse { .. }) {
        return Err(Error::KindMismatch("run_sparse_homotopy needs a sparse structure"));
    }
    if op.mode() != SensingMode::Vector {
        return Err(Error::ModeMismatch("sparse recovery needs a vector-mode operator"));
    }
    check_truth(truth, op.cols(), "sparse")?;
    run(op, obs, Prox::L1, Some(Homotopy { config }), truth, config.t_max, config.step_mu)
}

/// Proximal-gradient homotopy for group-sparse vectors (block prox).
pub fn run_group_homotopy(
    op: &SensingOperator,
    obs: &Observation,
    config: &HomotopyConfig,
    truth: Option<&StructuredSignal>,
) -> Result<RecoveryResult> {
    let Structure::Group { partition, .. } = &config.structure else {
        return Err(Error::KindMismatch("run_group_homotopy needs a group structure"));
    };
    if op.mode() != SensingMode::Vector {
        return Err(Error::ModeMismatch("group recovery needs a vector-mode operator"));
    }
    partition.check_dim(op.cols())?;
    check_truth(truth, op.cols(), "group")?;
    run(op, obs, Prox::Group(partition), Some(Homotopy { config }), truth, config.t_max, config.step_mu)
}

/// Proximal-gradient homotopy for low-rank matrices (singular value thresholding).
pub fn run_lowrank_homotopy(
    op: &SensingOperator,
    obs: &Observation,
    config: &HomotopyConfig,
    truth: Option<&StructuredSignal>,
) -> Result<RecoveryResult> {
    if !matches!(config.structure, Structure::LowRank { .. }) {
        return Err(Error::KindMismatch("run_lowrank_homotopy needs a low-rank structure"));
    }
    let SensingMode::Matrix { side } = op.mode() else {
        return Err(Error::ModeMismatch("low-rank recovery needs a matrix-mode operator"));
    };
    check_truth(truth, op.cols(), "lowrank")?;
    run(op, obs, Prox::Nuclear { side }, Some(Homotopy { config }), truth, config.t_max, config.step_mu)
}

/// Projected gradient descent onto `{||x||_1 <= radius}`.
///
/// Trace rows carry `lambda_t = 0` and `delta_t = radius`.
pub fn run_pgd(
    op: &SensingOperator,
    obs: &Observation,
    radius: f64,
    mu: f64,
    t_max: usize,
    truth: Option<&StructuredSignal>,
) -> Result<RecoveryResult> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return invalid(format!("radius must be finite and nonnegative, got {radius}"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return invalid(format!("step size must be positive, got {mu}"));
    }
    if op.mode() != SensingMode::Vector {
        return Err(Error::ModeMismatch("projected gradient needs a vector-mode operator"));
    }
    if let Some(t) = truth {
        if t.dim() != op.cols() {
            return Err(Error::DimensionMismatch { expected: op.cols(), got: t.dim() });
        }
    }
    run(op, obs, Prox::L1Ball { radius }, None, truth, t_max, mu)
}

fn run(
    op: &SensingOperator,
    obs: &Observation,
    prox: Prox<'_>,
    homotopy: Option<Homotopy<'_>>,
    truth: Option<&StructuredSignal>,
    t_max: usize,
    mu: f64,
) -> Result<RecoveryResult> {
    check_obs(op, obs)?;
    let (n, m) = (op.cols(), op.rows());
    let mut warnings = Vec::new();

    let truth_view = truth.map(|signal| {
        let flat = signal.vectorized();
        let norm = norm2(&flat);
        TruthView { signal, flat, norm }
    });

    let (delta0, delta0_estimated) = match &homotopy {
        Some(h) => {
            h.config.validate()?;
            match h.config.delta0 {
                Some(d) => (d, false),
                None => (default_delta0(op, obs)?, true),
            }
        }
        None => match &prox {
            Prox::L1Ball { radius } => (*radius, false),
            _ => unreachable!("baseline always projects"),
        },
    };
    if let (Some(_), Some(t)) = (&homotopy, &truth_view) {
        if delta0 < t.norm {
            warnings.push(format!(
                "Delta_0 = {delta0} is below ||x*|| = {}; the error bound is not guaranteed",
                t.norm
            ));
        }
    }
    if delta0_estimated {
        warnings.push(format!("Delta_0 estimated from data as {delta0}"));
    }

    let problem = Problem { prox, truth: truth_view };
    let divergence_cap = DIVERGENCE_FACTOR * delta0.max(f64::MIN_POSITIVE);

    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = vec![0.0; m];
    let mut outcome = ProxOutcome { reg: 0.0, rank: Some(0) };
    let mut delta_t = delta0;
    let mut trace = Vec::with_capacity(t_max.min(10_000) + 1);
    let mut pending: Option<StopReason> = None;
    let mut lambda_0 = 0.0;
    let mut clock = Instant::now();

    let (rel_tol, target) = match &homotopy {
        Some(h) => (h.config.rel_change_tol, h.config.target_error),
        None => (Some(DEFAULT_REL_CHANGE_TOL), None),
    };

    for t in 0..=t_max {
        let lambda = match &homotopy {
            Some(h) => lambda_schedule(h.config, delta_t)?,
            None => 0.0,
        };
        if t == 0 {
            lambda_0 = lambda;
        }
        op.gradient_step(&x, &obs.y, mu, &mut residual, &mut next)?;
        let objective = lambda * outcome.reg + 0.5 * norm2(&residual).powi(2);
        let rel_error = problem.truth.as_ref().map(|tv| tv.rel_error(&x));
        let leakage = problem.leakage(&x, &outcome)?;
        let wall_time_ns = clock.elapsed().as_nanos() as u64;
        trace.push(IterateRecord { t, lambda_t: lambda, delta_t, rel_error, leakage, objective, wall_time_ns });

        if pending.is_none() && t < t_max {
            if let (Some(goal), Some(err)) = (target, rel_error) {
                if err < goal {
                    pending = Some(StopReason::TargetError);
                }
            }
            if homotopy.is_some() && lambda_0 > 0.0 && lambda < f64::MIN_POSITIVE && obs.delta == 0.0 {
                pending = Some(StopReason::LambdaUnderflow);
            }
        }
        if t == t_max || pending.is_some() {
            break;
        }
        clock = Instant::now();

        outcome = problem.prox.apply(&mut next, lambda * mu);
        let norm_next = norm2(&next);
        if !norm_next.is_finite() || norm_next > divergence_cap {
            return Err(Error::Diverged { at: t + 1, trace });
        }
        if let Some(tol) = rel_tol {
            if norm_next > 0.0 && dist2(&next, &x) <= tol * norm_next {
                pending = Some(StopReason::RelativeChange);
            }
        }
        std::mem::swap(&mut x, &mut next);
        if let Some(h) = &homotopy {
            delta_t = delta_update(h.config, delta_t, m);
        }
    }

    let reason = pending.unwrap_or(StopReason::MaxIterations);
    let estimate = match &problem.prox {
        Prox::Nuclear { side } => SignalValues::Matrix(DMatrix::from_vec(*side, *side, x)),
        _ => SignalValues::Vector(x),
    };
    Ok(RecoveryResult {
        estimate,
        trace,
        converged: reason != StopReason::MaxIterations,
        reason,
        delta0,
        delta0_estimated,
        warnings,
    })
}
