//! Gaussian complexities and restricted singular values of structured cones.
//!
//! For a cone `P` intersected with the unit sphere the estimators here
//! evaluate
//!
//! ```text
//! gamma(P)   = E sup_{x in P} |<g, x>|
//! rho(P, Q)  = sup_{v in P, u in Q} <v, (I - mu A^T A) u>
//! xi(P)      = sup_{v in P} <v, A^T w / ||w||>
//! ```
//!
//! `xi` and the inner suprema have closed forms (top-k norms, top group
//! norms, top singular values). `rho` is computed exactly by support
//! enumeration on small sparse and group-sparse cones and bounded from below
//! by projected power iteration otherwise.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    binomial, dot, norm2, psd_lambda_max, singular_values, sorted_svd, top_k_indices,
    top_k_norm, top_k_sum_in_place, truncate,
};
use crate::par::{map_range, stream_rng};
use crate::homotopy::{HomotopyConfig, Structure};
use crate::sensing::{Observation, SensingMode, SensingOperator};
use crate::signals::GroupPartition;

mod calibration;

pub use calibration::{
    calibrate_constants, fingerprint, majorized, observed_contraction, Calibration,
    CalibrationPlan, Instance, TrackingScenario, CALIBRATION_VERSION, RATE_TOLERANCE,
};

/// Upper limit on `C(units, |P|) * C(units, |Q|)` for [`rho_exact`].
pub const RHO_ENUMERATION_BUDGET: u128 = 100_000_000;

/// Inner iterations per trial of [`rho_monte_carlo`].
pub const POWER_ITERATIONS: usize = 50;

/// Structured set intersected with the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeSpec {
    Sparse { n: usize, s: usize },
    GroupSparse { partition: GroupPartition, s: usize },
    /// `d x d` matrices of rank at most `r`, column-stacked.
    LowRank { d: usize, r: usize },
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Sparse { n, .. } => *n,
            Self::GroupSparse { partition, .. } => partition.dim(),
            Self::LowRank { d, .. } => d * d,
        }
    }

    pub fn level(&self) -> usize {
        match self {
            Self::Sparse { s, .. } | Self::GroupSparse { s, .. } => *s,
            Self::LowRank { r, .. } => *r,
        }
    }

    /// Same cone family with the level multiplied by `factor`, clamped to the ambient bound.
    pub fn scaled(&self, factor: usize) -> Self {
        match self {
            Self::Sparse { n, s } => Self::Sparse { n: *n, s: (s * factor).min(*n) },
            Self::GroupSparse { partition, s } => Self::GroupSparse {
                partition: partition.clone(),
                s: (s * factor).min(partition.len()),
            },
            Self::LowRank { d, r } => Self::LowRank { d: *d, r: (r * factor).min(*d) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (level, bound) = match self {
            Self::Sparse { n, s } => (*s, *n),
            Self::GroupSparse { partition, s } => (*s, partition.len()),
            Self::LowRank { d, r } => (*r, *d),
        };
        if level == 0 || level > bound {
            return invalid(format!("cone level {level} outside 1..={bound}"));
        }
        Ok(())
    }

    /// `sup_{x in cone, ||x|| = 1} <g, x>`.
    pub fn sup_inner(&self, g: &[f64]) -> f64 {
        match self {
            Self::Sparse { s, .. } => top_k_norm(g, *s),
            Self::GroupSparse { partition, s } => {
                let mut sq: Vec<f64> = partition.group_norms(g).iter().map(|v| v * v).collect();
                top_k_sum_in_place(&mut sq, *s).sqrt()
            }
            Self::LowRank { d, r } => {
                let sv = singular_values(&DMatrix::from_column_slice(*d, *d, g));
                sv.iter().take(*r).map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }

    /// Unit vector of the cone closest to `g` (the maximizer of `<g, x>`),
    /// or zero when `g` has no component in any cone direction.
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        match self {
            Self::Sparse { s, .. } => {
                let mags: Vec<f64> = g.iter().map(|v| v.abs()).collect();
                for i in top_k_indices(&mags, *s) {
                    out[i] = g[i];
                }
            }
            Self::GroupSparse { partition, s } => {
                let norms = partition.group_norms(g);
                for k in top_k_indices(&norms, *s) {
                    let range = partition.groups()[k].clone();
                    out[range.clone()].copy_from_slice(&g[range]);
                }
            }
            Self::LowRank { d, r } => {
                let svd = sorted_svd(&DMatrix::from_column_slice(*d, *d, g));
                out.copy_from_slice(truncate(&svd, *r).as_slice());
            }
        }
        let norm = norm2(&out);
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

/// How an [`RsvEstimate`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsvMethod {
    ExactEnumeration,
    ClosedForm,
    MonteCarlo { trials: usize },
    /// `rho(S_2k, S_2k) <= sqrt(2) * rho(S_k, S_2k)` from splitting a 2k-sparse vector.
    SplitBound,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsvEstimate {
    pub value: f64,
    pub method: RsvMethod,
    /// The value is at least the true supremum (exact values count as upper bounds).
    pub is_upper_bound: bool,
}

impl RsvEstimate {
    fn exact(value: f64, method: RsvMethod) -> Self {
        Self { value, method, is_upper_bound: true }
    }
}

/// Monte-Carlo mean of `sup_{x in cone} |<g, x>|` over `trials` Gaussian draws.
pub fn gaussian_complexity(cone: &ConeSpec, trials: usize, seed: u64) -> f64 {
    let trials = trials.max(1);
    let n = cone.dim();
    let sups = map_range(trials, |k| {
        let mut rng = stream_rng(seed, k as u64);
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        cone.sup_inner(&g)
    });
    sups.iter().sum::<f64>() / trials as f64
}

/// `xi(P)` on the realized noise direction, via the closed form of the cone.
pub fn xi_exact(op: &SensingOperator, noise_dir: &[f64], cone: &ConeSpec) -> Result<RsvEstimate> {
    if (norm2(noise_dir) - 1.0).abs() > 1e-10 {
        return invalid("noise direction must be a unit vector");
    }
    check_cone_dim(op, cone)?;
    let atw = op.apply_adjoint(noise_dir)?;
    Ok(RsvEstimate::exact(cone.sup_inner(&atw), RsvMethod::ClosedForm))
}

fn check_cone_dim(op: &SensingOperator, cone: &ConeSpec) -> Result<()> {
    cone.validate()?;
    if cone.dim() != op.cols() {
        return Err(Error::DimensionMismatch { expected: op.cols(), got: cone.dim() });
    }
    Ok(())
}

/// Dense `I - mu A^T A`, row-major.
pub fn restricted_operator(op: &SensingOperator, mu: f64) -> Vec<f64> {
    let n = op.cols();
    let mut out = vec![0.0; n * n];
    for i in 0..op.rows() {
        let row = op.row(i);
        for a in 0..n {
            let ra = mu * row[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut out[a * n..(a + 1) * n];
            for (o, rb) in dst.iter_mut().zip(row) {
                *o -= ra * rb;
            }
        }
    }
    for a in 0..n {
        out[a * n + a] += 1.0;
    }
    out
}

/// Index units of a sparse or group cone: singletons or groups.
fn units(cone: &ConeSpec) -> Result<Vec<Vec<usize>>> {
    match cone {
        ConeSpec::Sparse { n, .. } => Ok((0..*n).map(|i| vec![i]).collect()),
        ConeSpec::GroupSparse { partition, .. } => {
            Ok(partition.groups().iter().map(|g| g.clone().collect()).collect())
        }
        ConeSpec::LowRank { .. } => Err(Error::KindMismatch(
            "exact enumeration covers sparse and group cones; use rho_monte_carlo",
        )),
    }
}

/// Exact `rho(P, Q)` by enumerating support pairs.
///
/// The value is `max_{S, T} sigma_max(M[S, T])` for `M = I - mu A^T A`, with
/// `S`, `T` ranging over the maximal supports of the two cones. Since `M` is
/// symmetric the smaller cone is enumerated in the outer loop; the inner
/// loop is a branch-and-bound over supports sorted by their Frobenius mass.
pub fn rho_exact(op: &SensingOperator, mu: f64, p: &ConeSpec, q: &ConeSpec) -> Result<RsvEstimate> {
    check_cone_dim(op, p)?;
    check_cone_dim(op, q)?;
    let (unit_p, unit_q) = (units(p)?, units(q)?);
    if unit_p != unit_q {
        return Err(Error::KindMismatch("both cones must share the same index units"));
    }
    let count = unit_p.len();
    let (outer, inner) = if p.level() <= q.level() {
        (p.level(), q.level())
    } else {
        (q.level(), p.level())
    };
    let required = binomial(count, outer).saturating_mul(binomial(count, inner));
    if required > RHO_ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { required, budget: RHO_ENUMERATION_BUDGET });
    }
    let m = restricted_operator(op, mu);
    let value = enumerate_rho(&m, op.cols(), &unit_p, outer, inner);
    Ok(RsvEstimate::exact(value, RsvMethod::ExactEnumeration))
}

/// Exact `rho` of an explicit symmetric matrix over unit-sparse supports.
pub(crate) fn enumerate_rho(
    m: &[f64],
    n: usize,
    units: &[Vec<usize>],
    outer: usize,
    inner: usize,
) -> f64 {
    let outer_sets = combinations(units.len(), outer);
    // Running best as f64 bits; values are nonnegative so bit order is numeric order.
    let best = AtomicU64::new(0f64.to_bits());
    map_range(outer_sets.len(), |k| {
        let rows: Vec<usize> = outer_sets[k].iter().flat_map(|&u| units[u].iter().copied()).collect();
        let a = rows.len();
        // Per-unit Gram blocks sum_{j in unit} c_j c_j^T with c_j = M[rows, j].
        let mut blocks: Vec<(f64, Vec<f64>)> = units
            .iter()
            .map(|unit| {
                let mut gram = vec![0.0; a * a];
                for &j in unit {
                    let col: Vec<f64> = rows.iter().map(|&r| m[r * n + j]).collect();
                    for x in 0..a {
                        for y in 0..a {
                            gram[x * a + y] += col[x] * col[y];
                        }
                    }
                }
                let trace = (0..a).map(|x| gram[x * a + x]).sum::<f64>();
                (trace, gram)
            })
            .collect();
        blocks.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut search = BranchAndBound { blocks: &blocks, a, k: inner, best: &best };
        let mut acc = vec![0.0; a * a];
        search.descend(0, 0, 0.0, &mut acc);
    });
    f64::from_bits(best.load(Ordering::Relaxed)).sqrt()
}

struct BranchAndBound<'a> {
    blocks: &'a [(f64, Vec<f64>)],
    a: usize,
    k: usize,
    best: &'a AtomicU64,
}

impl BranchAndBound<'_> {
    fn best(&self) -> f64 {
        f64::from_bits(self.best.load(Ordering::Relaxed))
    }

    fn offer(&self, value: f64) {
        self.best.fetch_max(value.max(0.0).to_bits(), Ordering::Relaxed);
    }

    fn descend(&mut self, start: usize, depth: usize, trace: f64, acc: &mut Vec<f64>) {
        if depth == self.k {
            self.offer(psd_lambda_max(acc, self.a));
            return;
        }
        let remaining = self.k - depth;
        for i in start..=self.blocks.len() - remaining {
            // Traces are sorted descending, so this is the largest completion.
            let bound = trace + self.blocks[i..i + remaining].iter().map(|b| b.0).sum::<f64>();
            if bound <= self.best() {
                return;
            }
            let block = &self.blocks[i].1;
            for (x, b) in acc.iter_mut().zip(block) {
                *x += b;
            }
            self.descend(i + 1, depth + 1, trace + self.blocks[i].0, acc);
            for (x, b) in acc.iter_mut().zip(block) {
                *x -= b;
            }
        }
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Lower bound on `rho(P, Q)` by alternating projected power iteration.
///
/// Each trial starts from a random point of `Q` and alternates
/// `v = proj_P(M u)`, `u = proj_Q(M v)`; every evaluated pair is feasible,
/// so the maximum over trials never exceeds the true supremum.
pub fn rho_monte_carlo(
    op: &SensingOperator,
    mu: f64,
    p: &ConeSpec,
    q: &ConeSpec,
    trials: usize,
    seed: u64,
) -> Result<RsvEstimate> {
    check_cone_dim(op, p)?;
    check_cone_dim(op, q)?;
    let n = op.cols();
    let apply_m = |u: &[f64]| -> Vec<f64> {
        let au = op.apply(u).expect("dimension checked");
        let mut out = op.apply_adjoint(&au).expect("dimension checked");
        for (o, ui) in out.iter_mut().zip(u) {
            *o = ui - mu * *o;
        }
        out
    };
    let values = map_range(trials.max(1), |k| {
        let mut rng = stream_rng(seed, k as u64);
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut u = q.project(&g);
        let mut best: f64 = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let mu_u = apply_m(&u);
            let v = p.project(&mu_u);
            best = best.max(dot(&v, &mu_u));
            let mv = apply_m(&v);
            u = q.project(&mv);
            best = best.max(dot(&u, &mv));
        }
        best
    });
    let value = values.into_iter().fold(0.0, f64::max);
    Ok(RsvEstimate { value, method: RsvMethod::MonteCarlo { trials }, is_upper_bound: false })
}

/// `rho(S_2k, S_2k)`: exact when enumeration fits the budget, otherwise the
/// split bound `sqrt(2) * rho(S_k, S_2k)` from the supplied exact value.
pub fn rho_doubled(
    op: &SensingOperator,
    mu: f64,
    cone: &ConeSpec,
    rho_k_2k: &RsvEstimate,
) -> Result<RsvEstimate> {
    let doubled = cone.scaled(2);
    match rho_exact(op, mu, &doubled, &doubled) {
        Ok(est) => Ok(est),
        Err(Error::BudgetExceeded { .. }) if rho_k_2k.is_upper_bound => Ok(RsvEstimate {
            value: std::f64::consts::SQRT_2 * rho_k_2k.value,
            method: RsvMethod::SplitBound,
            is_upper_bound: true,
        }),
        Err(e) => Err(e),
    }
}

impl ConeSpec {
    /// Structure cone of `structure` for the ambient space of `op`.
    pub fn for_structure(structure: &Structure, op: &SensingOperator) -> Result<Self> {
        let cone = match (structure, op.mode()) {
            (Structure::Sparse { s }, SensingMode::Vector) => Self::Sparse { n: op.cols(), s: *s },
            (Structure::Group { partition, s }, SensingMode::Vector) => {
                partition.check_dim(op.cols())?;
                Self::GroupSparse { partition: partition.clone(), s: *s }
            }
            (Structure::LowRank { r }, SensingMode::Matrix { side }) => Self::LowRank { d: side, r: *r },
            _ => return Err(Error::ModeMismatch("structure does not fit the operator mode")),
        };
        cone.validate()?;
        Ok(cone)
    }
}

/// Monte-Carlo settings of [`oracle_config`] for cones without exact enumeration.
#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub trials: usize,
    pub seed: u64,
    /// Factor applied to the Monte-Carlo lower bounds.
    pub safety: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { trials: 30, seed: 0, safety: 2.0 }
    }
}

/// Solver constants read off the drawn operator itself.
///
/// Vector structures use exact enumeration: `rho = rho(S_2s, S_2s) + rho(S_s, S_2s)`,
/// `xi = xi(S_s) + xi(S_2s)`, with `rho(S_s, S_2s)` and `xi(S_s)` in the schedule.
/// Low-rank structures use the `S_r`, `S_3r` analogs with Monte-Carlo
/// restricted singular values scaled by the safety factor. The
/// resulting `rho` may exceed one on small instances.
pub fn oracle_config(
    op: &SensingOperator,
    obs: &Observation,
    structure: &Structure,
    delta0: f64,
    t_max: usize,
    opts: OracleOptions,
) -> Result<HomotopyConfig> {
    let cone = ConeSpec::for_structure(structure, op)?;
    let m = op.rows();
    let mu = 1.0 / m as f64;
    let (rho_small, rho_big) = match &cone {
        ConeSpec::LowRank { .. } => {
            let big = cone.scaled(3);
            let rb = rho_monte_carlo(op, mu, &cone, &big, opts.trials, opts.seed)?;
            let bb = rho_monte_carlo(op, mu, &big, &big, opts.trials, opts.seed ^ 1)?;
            (opts.safety * rb.value, opts.safety * bb.value)
        }
        _ => {
            let big = cone.scaled(2);
            let rb = rho_exact(op, mu, &cone, &big)?;
            let bb = rho_doubled(op, mu, &cone, &rb)?;
            (rb.value, bb.value)
        }
    };
    let big = match &cone {
        ConeSpec::LowRank { .. } => cone.scaled(3),
        _ => cone.scaled(2),
    };
    let (xi_small, xi_big) = match obs.noise_direction() {
        Some(w) => (xi_exact(op, &w, &cone)?.value, xi_exact(op, &w, &big)?.value),
        None => (0.0, 0.0),
    };
    let mut config = HomotopyConfig::new(structure.clone(), m);
    config.delta0 = Some(delta0);
    config.rho = rho_big + rho_small;
    config.rho_restricted = rho_small;
    config.xi = xi_small + xi_big;
    config.xi_restricted = xi_small;
    config.delta = obs.delta;
    config.t_max = t_max;
    config.allow_noncontractive = true;
    Ok(config)
}

/// Inputs of the order-level formulas: sub-Gaussian constant and probability slack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryParams {
    pub k: f64,
    pub eta: f64,
}

/// `rho = C_rho K^2 (gamma + eta) / sqrt(m)` and `xi = C_xi K (gamma + eta)`.
///
/// `gamma_doubled` is the complexity of the already doubled (sparse, group)
/// or tripled (low-rank) cone.
pub fn theoretical_rho_xi(
    gamma_doubled: f64,
    m: usize,
    params: TheoryParams,
    calib: &Calibration,
) -> (f64, f64) {
    let spread = gamma_doubled + params.eta;
    let rho = calib.c_rho * params.k * params.k * spread / (m as f64).sqrt();
    let xi = calib.c_xi * params.k * spread;
    (rho, xi)
}

/// Deviation-law bound `C K^2 (gamma_P + gamma_Q + 2 eta) / sqrt(m)`.
pub fn deviation_bound(c: f64, gamma_p: f64, gamma_q: f64, m: usize, params: TheoryParams) -> f64 {
    c * params.k * params.k * (gamma_p + gamma_q + 2.0 * params.eta) / (m as f64).sqrt()
}

/// Per-`m` summary of [`verify_deviation_bound`].
#[derive(Clone, Debug)]
pub struct DeviationRow {
    pub m: usize,
    /// Exact restricted deviation of each draw.
    pub sups: Vec<f64>,
    pub median: f64,
    /// Smallest constant that would cover every draw.
    pub admissible_constant: f64,
    /// Fraction of draws within the bound at the supplied constant.
    pub fraction_within: f64,
}

impl DeviationRow {
    pub fn scaled_median(&self) -> f64 {
        self.median * (self.m as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct DeviationReport {
    pub gamma_p: f64,
    pub gamma_q: f64,
    pub constant: f64,
    pub rows: Vec<DeviationRow>,
}

impl DeviationReport {
    /// Smallest constant covering at least `coverage` of all draws.
    pub fn constant_at_coverage(&self, coverage: f64, params: TheoryParams) -> f64 {
        let mut scaled: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|row| {
                let unit = deviation_bound(1.0, self.gamma_p, self.gamma_q, row.m, params);
                row.sups.iter().map(move |s| s / unit)
            })
            .collect();
        quantile(&mut scaled, coverage)
    }
}

/// Smallest value `c` in `values` such that at least `coverage` of them are `<= c`.
pub fn quantile(values: &mut [f64], coverage: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let need = ((coverage * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[need - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Options shared by the deviation harness.
#[derive(Clone, Copy, Debug)]
pub struct DeviationOptions {
    pub draws: usize,
    pub seed: u64,
    pub spec: crate::sensing::SubGaussianSpec,
    pub params: TheoryParams,
    pub complexity_trials: usize,
    /// Constant checked by `fraction_within`.
    pub constant: f64,
}

/// Draws fresh operators for each `m` and compares the exact restricted
/// deviation `sup <v, (I - A^T A / m) u>` with the deviation-law bound.
pub fn verify_deviation_bound(
    p: &ConeSpec,
    q: &ConeSpec,
    m_list: &[usize],
    opts: &DeviationOptions,
) -> Result<DeviationReport> {
    p.validate()?;
    q.validate()?;
    let gamma_p = gaussian_complexity(p, opts.complexity_trials, opts.seed ^ 0x5eed_0001);
    let gamma_q = gaussian_complexity(q, opts.complexity_trials, opts.seed ^ 0x5eed_0002);
    let n = p.dim();
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let sups: Vec<f64> = map_range(opts.draws, |k| {
            let draw_seed = opts.seed.wrapping_mul(1_000_003).wrapping_add((m as u64) << 20 | k as u64);
            let op = SensingOperator::generate(m, n, opts.spec, draw_seed)?;
            Ok(rho_exact(&op, 1.0 / m as f64, p, q)?.value)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let unit = deviation_bound(1.0, gamma_p, gamma_q, m, opts.params);
        let admissible_constant = sups.iter().fold(0.0f64, |acc, s| acc.max(s / unit));
        let within = sups.iter().filter(|&&s| s <= opts.constant * unit).count();
        rows.push(DeviationRow {
            m,
            median: median(&sups),
            fraction_within: within as f64 / sups.len().max(1) as f64,
            admissible_constant,
            sups,
        });
    }
    Ok(DeviationReport { gamma_p, gamma_q, constant: opts.constant, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SubGaussianSpec;

    #[test]
    fn combinations_enumerate_all_subsets() {
        let c = combinations(5, 2);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 1]);
        assert_eq!(c[9], vec![3, 4]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn cone_projection_is_unit_and_attains_the_supremum() {
        let g: Vec<f64> = (0..16).map(|i| ((i * 7) as f64 * 0.3).sin()).collect();
        let cones = [
            ConeSpec::Sparse { n: 16, s: 3 },
            ConeSpec::GroupSparse { partition: GroupPartition::uniform(16, 4).unwrap(), s: 2 },
            ConeSpec::LowRank { d: 4, r: 2 },
        ];
        for cone in &cones {
            let x = cone.project(&g);
            assert!((norm2(&x) - 1.0).abs() < 1e-12);
            assert!((dot(&x, &g) - cone.sup_inner(&g)).abs() < 1e-10, "{cone:?}");
        }
    }

    #[test]
    fn xi_unrestricted_and_identity_cases() {
        let op = SensingOperator::generate(6, 5, SubGaussianSpec::gaussian(), 3).unwrap();
        let w: Vec<f64> = {
            let raw = [0.3, -1.0, 0.2, 0.7, 0.1, -0.4];
            let n = norm2(&raw);
            raw.iter().map(|v| v / n).collect()
        };
        let full = xi_exact(&op, &w, &ConeSpec::Sparse { n: 5, s: 5 }).unwrap();
        assert!((full.value - norm2(&op.apply_adjoint(&w).unwrap())).abs() < 1e-12);
        assert!(xi_exact(&op, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0], &ConeSpec::Sparse { n: 5, s: 1 }).is_err());

        let n = 4;
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        let id = SensingOperator::from_entries(n, n, e, SubGaussianSpec::gaussian(), SensingMode::Vector)
            .unwrap();
        let xi = xi_exact(&id, &[1.0, 0.0, 0.0, 0.0], &ConeSpec::Sparse { n, s: 1 }).unwrap();
        assert_eq!(xi.value, 1.0);
    }

    #[test]
    fn rho_vanishes_for_scaled_orthogonal_operator() {
        // A = 2 I, mu = 1/4 gives I - mu A^T A = 0.
        let n = 5;
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 2.0;
        }
        let op = SensingOperator::from_entries(n, n, e, SubGaussianSpec::gaussian(), SensingMode::Vector)
            .unwrap();
        let c = ConeSpec::Sparse { n, s: 2 };
        assert!(rho_exact(&op, 0.25, &c, &c).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn one_sparse_rho_is_the_largest_entry() {
        let (m, n) = (9, 6);
        let op = SensingOperator::generate(m, n, SubGaussianSpec::gaussian(), 8).unwrap();
        let mu = 1.0 / m as f64;
        let mat = restricted_operator(&op, mu);
        let largest = mat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let c = ConeSpec::Sparse { n, s: 1 };
        let rho = rho_exact(&op, mu, &c, &c).unwrap();
        assert!((rho.value - largest).abs() < 1e-12);
        assert_eq!(rho.method, RsvMethod::ExactEnumeration);
    }

    #[test]
    fn budget_and_kind_errors() {
        let op = SensingOperator::generate(10, 400, SubGaussianSpec::gaussian(), 1).unwrap();
        let p = ConeSpec::Sparse { n: 400, s: 3 };
        let q = ConeSpec::Sparse { n: 400, s: 6 };
        assert!(matches!(rho_exact(&op, 0.1, &p, &q), Err(Error::BudgetExceeded { .. })));
        let op2 = SensingOperator::generate(10, 16, SubGaussianSpec::gaussian(), 1).unwrap();
        let lr = ConeSpec::LowRank { d: 4, r: 1 };
        assert!(matches!(rho_exact(&op2, 0.1, &lr, &lr), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn monte_carlo_on_zero_operator_is_one() {
        let op = SensingOperator::from_entries(
            3,
            8,
            vec![0.0; 24],
            SubGaussianSpec::gaussian(),
            SensingMode::Vector,
        )
        .unwrap();
        let c = ConeSpec::Sparse { n: 8, s: 2 };
        let est = rho_monte_carlo(&op, 0.7, &c, &c, 5, 1).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!(!est.is_upper_bound);
    }

    #[test]
    fn formula_scaling() {
        let calib = Calibration::for_tests(0.3, 1.2, 0.8);
        let params = TheoryParams { k: 1.5, eta: 1.0 };
        let (r1, x1) = theoretical_rho_xi(9.0, 400, params, &calib);
        let (r2, x2) = theoretical_rho_xi(9.0, 800, params, &calib);
        assert!((r1 / r2 - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(x1, x2);
        let (r3, _) = theoretical_rho_xi(9.0, 1_000_000, params, &calib);
        assert!(r3 < r2);
    }

    #[test]
    fn quantile_and_median() {
        let mut v = vec![5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&mut v, 0.6), 3.0);
        assert_eq!(quantile(&mut v, 1.0), 5.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
