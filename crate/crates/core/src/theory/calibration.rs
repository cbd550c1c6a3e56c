//! Scenario-driven fit of the deviation, contraction and noise constants.
//!
//! A [`Calibration`] fixes the three absolute constants of the order-level
//! formulas for one problem family at one ambient size:
//!
//! * `C_dev` scales the deviation law and drives the schedule's restricted
//!   singular value,
//! * `C_rho` scales the contraction factor of the bound recursion,
//! * `C_xi` scales the noise amplification of the recursion.
//!
//! The record also stores the Gaussian complexities it was fitted with so
//! that every consumer evaluates the formulas identically.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use super::{
    deviation_bound, gaussian_complexity, rho_monte_carlo, verify_deviation_bound, xi_exact,
    ConeSpec, DeviationOptions, TheoryParams,
};
use crate::error::{Error, Result};
use crate::homotopy::{
    log_error_slope, run_group_homotopy, run_lowrank_homotopy, run_sparse_homotopy, HomotopyConfig,
    RecoveryResult, Structure,
};
use crate::linalg::norm2;
use crate::par::{map_slice, stream_rng};
use crate::sensing::{observe, Observation, SensingOperator, SubGaussianFamily, SubGaussianSpec};
use crate::signals::StructuredSignal;

pub const CALIBRATION_VERSION: u32 = 1;

/// Seed of the Gaussian-complexity estimates stored in a record.
const COMPLEXITY_SEED: u64 = 0x0067_616d_6d61;

/// Relative error at which a training run stops.
const PRECISION_FLOOR: f64 = 1e-10;

/// Slack between a fitted contraction rate and the factor it must stay below.
pub const RATE_TOLERANCE: f64 = 5e-3;

const BISECTION_STEPS: usize = 14;

/// Largest contraction factor the fit may return at the smallest `m`.
const MAX_RHO: f64 = 0.95;

/// Persisted calibration constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub version: u32,
    /// `sparse`, `group` or `lowrank`.
    pub kind: String,
    pub family: SubGaussianFamily,
    /// Sub-Gaussian constant of the sensing entries.
    pub k: f64,
    pub eta: f64,
    pub c_dev: f64,
    pub c_rho: f64,
    pub c_xi: f64,
    /// Complexity of the structure cone (`S_s` or `S_r`).
    pub gamma_level: f64,
    /// Complexity of the enlarged cone (`S_2s` or `S_3r`).
    pub gamma_doubled: f64,
    pub scenario_fingerprint: u64,
    /// Training seeds of the contraction fit.
    pub seeds: Vec<u64>,
}

/// Full-scale problem whose runs the constants must track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingScenario {
    /// Structure cone at full size (`S_s` or `S_r`).
    pub cone: ConeSpec,
    pub m_list: Vec<usize>,
    pub spec: SubGaussianSpec,
}

impl TrackingScenario {
    pub fn kind(&self) -> &'static str {
        cone_kind(&self.cone)
    }

    /// `S_2s` for vector cones, `S_3r` for matrix cones.
    pub fn enlarged_cone(&self) -> ConeSpec {
        enlarged(&self.cone)
    }

    pub fn structure(&self) -> Structure {
        match &self.cone {
            ConeSpec::Sparse { s, .. } => Structure::Sparse { s: *s },
            ConeSpec::GroupSparse { partition, s } => {
                Structure::Group { partition: partition.clone(), s: *s }
            }
            ConeSpec::LowRank { r, .. } => Structure::LowRank { r: *r },
        }
    }

    /// Sensing operator, ground truth and measurements for one seed.
    pub fn draw(&self, m: usize, sigma: f64, seed: u64) -> Result<Instance> {
        let (op, truth) = match &self.cone {
            ConeSpec::Sparse { n, s } => (
                SensingOperator::generate(m, *n, self.spec, seed)?,
                StructuredSignal::generate_sparse(*n, *s, seed)?,
            ),
            ConeSpec::GroupSparse { partition, s } => (
                SensingOperator::generate(m, partition.dim(), self.spec, seed)?,
                StructuredSignal::generate_group_sparse(partition, *s, seed)?,
            ),
            ConeSpec::LowRank { d, r } => (
                SensingOperator::generate_matrix(m, *d, self.spec, seed)?,
                StructuredSignal::generate_low_rank(*d, *r, seed)?,
            ),
        };
        let obs = observe(&op, &truth, sigma, seed)?;
        Ok(Instance { op, truth, obs })
    }

    /// Stable hash of everything the constants depend on.
    pub fn fingerprint(&self, eta: f64) -> u64 {
        let mut desc = format!("{}|{}|{}|eta={eta:?}", self.kind(), self.spec.family.name(), self.cone.level());
        match &self.cone {
            ConeSpec::Sparse { n, .. } => write!(desc, "|n={n}").unwrap(),
            ConeSpec::GroupSparse { partition, .. } => {
                for g in partition.groups() {
                    write!(desc, "|{}..{}", g.start, g.end).unwrap();
                }
            }
            ConeSpec::LowRank { d, .. } => write!(desc, "|d={d}").unwrap(),
        }
        fingerprint(desc.as_bytes())
    }
}

fn cone_kind(cone: &ConeSpec) -> &'static str {
    match cone {
        ConeSpec::Sparse { .. } => "sparse",
        ConeSpec::GroupSparse { .. } => "group",
        ConeSpec::LowRank { .. } => "lowrank",
    }
}

fn enlarged(cone: &ConeSpec) -> ConeSpec {
    match cone {
        ConeSpec::LowRank { .. } => cone.scaled(3),
        _ => cone.scaled(2),
    }
}

/// One synthetic problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub op: SensingOperator,
    pub truth: StructuredSignal,
    pub obs: Observation,
}

impl Instance {
    pub fn solve(&self, config: &HomotopyConfig) -> Result<RecoveryResult> {
        match &config.structure {
            Structure::Sparse { .. } => run_sparse_homotopy(&self.op, &self.obs, config, Some(&self.truth)),
            Structure::Group { .. } => run_group_homotopy(&self.op, &self.obs, config, Some(&self.truth)),
            Structure::LowRank { .. } => run_lowrank_homotopy(&self.op, &self.obs, config, Some(&self.truth)),
        }
    }
}

/// Settings of [`calibrate_constants`].
#[derive(Clone, Debug)]
pub struct CalibrationPlan {
    pub scenario: TrackingScenario,
    /// Seeds of the training draws; keep them disjoint from evaluation seeds.
    pub seeds: Vec<u64>,
    pub eta: f64,
    /// Small cone whose deviation is enumerated exactly (vector kinds only).
    pub deviation_cone: Option<ConeSpec>,
    pub deviation_m: Vec<usize>,
    pub deviation_draws: usize,
    /// Fraction of deviation draws the fitted `C_dev` must cover.
    pub coverage: f64,
    pub complexity_trials: usize,
    /// Monte-Carlo trials per restricted singular value (matrix kinds).
    pub mc_trials: usize,
    /// Factor applied to Monte-Carlo lower bounds.
    pub safety: f64,
    /// Relative margin added to the fitted `C_rho`.
    pub margin: f64,
    pub t_max: usize,
}

impl CalibrationPlan {
    /// Defaults: `eta = 1`, 99% coverage, no Monte-Carlo safety factor, 10% margin.
    pub fn new(scenario: TrackingScenario, seeds: Vec<u64>) -> Self {
        let deviation_cone = match &scenario.cone {
            ConeSpec::Sparse { .. } => Some(ConeSpec::Sparse { n: 10, s: 2 }),
            ConeSpec::GroupSparse { .. } => Some(ConeSpec::GroupSparse {
                partition: crate::signals::GroupPartition::uniform(12, 6).expect("valid partition"),
                s: 1,
            }),
            ConeSpec::LowRank { .. } => None,
        };
        Self {
            scenario,
            seeds,
            eta: 1.0,
            deviation_cone,
            deviation_m: vec![100, 400, 1600],
            deviation_draws: 100,
            coverage: 0.99,
            complexity_trials: 2000,
            mc_trials: 20,
            safety: 1.0,
            margin: 0.1,
            t_max: 1000,
        }
    }
}

impl Calibration {
    /// Record with explicit constants; complexities are estimated for `cone`.
    pub fn explicit(
        cone: &ConeSpec,
        family: SubGaussianFamily,
        eta: f64,
        constants: (f64, f64, f64),
        complexity_trials: usize,
    ) -> Self {
        let spec = SubGaussianSpec::new(family);
        let scenario = TrackingScenario { cone: cone.clone(), m_list: Vec::new(), spec };
        Self {
            version: CALIBRATION_VERSION,
            kind: cone_kind(cone).to_string(),
            family,
            k: spec.psi2_norm(),
            eta,
            c_dev: constants.0,
            c_rho: constants.1,
            c_xi: constants.2,
            gamma_level: gaussian_complexity(cone, complexity_trials, COMPLEXITY_SEED),
            gamma_doubled: gaussian_complexity(&enlarged(cone), complexity_trials, COMPLEXITY_SEED),
            scenario_fingerprint: scenario.fingerprint(eta),
            seeds: Vec::new(),
        }
    }

    #[cfg(test)]
    pub(crate) fn for_tests(c_dev: f64, c_rho: f64, c_xi: f64) -> Self {
        Self {
            version: CALIBRATION_VERSION,
            kind: "sparse".into(),
            family: SubGaussianFamily::Gaussian,
            k: 1.0,
            eta: 1.0,
            c_dev,
            c_rho,
            c_xi,
            gamma_level: 1.0,
            gamma_doubled: 2.0,
            scenario_fingerprint: 0,
            seeds: Vec::new(),
        }
    }

    fn params(&self) -> TheoryParams {
        TheoryParams { k: self.k, eta: self.eta }
    }

    /// Contraction factor `C_rho K^2 (gamma_doubled + eta) / sqrt(m)`.
    pub fn rho(&self, m: usize) -> f64 {
        super::theoretical_rho_xi(self.gamma_doubled, m, self.params(), self).0
    }

    /// Noise amplification `C_xi K (gamma_doubled + eta)`.
    pub fn xi(&self) -> f64 {
        super::theoretical_rho_xi(self.gamma_doubled, 1, self.params(), self).1
    }

    /// Schedule value of the restricted singular value from the deviation law.
    pub fn rho_restricted(&self, m: usize) -> f64 {
        deviation_bound(self.c_dev, self.gamma_level, self.gamma_doubled, m, self.params())
    }

    /// Solver configuration for `instance` tracking the bound from `delta0`.
    pub fn config(
        &self,
        scenario: &TrackingScenario,
        op: &SensingOperator,
        obs: &Observation,
        delta0: f64,
        t_max: usize,
    ) -> Result<HomotopyConfig> {
        if self.kind != scenario.kind() {
            return Err(Error::KindMismatch("calibration kind differs from the scenario"));
        }
        if op.spec().family != self.family {
            return Err(Error::Calibration(format!(
                "calibrated for {} entries, operator draws {}",
                self.family.name(),
                op.spec().family.name()
            )));
        }
        let m = op.rows();
        let mut config = HomotopyConfig::new(scenario.structure(), m);
        config.delta0 = Some(delta0);
        config.rho = self.rho(m);
        config.rho_restricted = self.rho_restricted(m);
        config.xi = self.xi();
        config.xi_restricted = match obs.noise_direction() {
            Some(w) => xi_exact(op, &w, &scenario.cone)?.value,
            None => 0.0,
        };
        config.delta = obs.delta;
        config.t_max = t_max;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# homotopy calibration record\n\
             version = {}\nkind = {}\nfamily = {}\nK = {:?}\neta = {:?}\n\
             C_dev = {:?}\nC_rho = {:?}\nC_xi = {:?}\n\
             gamma_level = {:?}\ngamma_doubled = {:?}\n\
             scenario_fingerprint = {:016x}\nseeds = {}\n",
            self.version,
            self.kind,
            self.family.name(),
            self.k,
            self.eta,
            self.c_dev,
            self.c_rho,
            self.c_xi,
            self.gamma_level,
            self.gamma_doubled,
            self.scenario_fingerprint,
            seeds.join(","),
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: std::collections::BTreeMap<String, String> = Default::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Parse(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if fields.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let get = |key: &str| {
            fields
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let v = get(key)?;
            let parsed: f64 = v.parse().map_err(|_| Error::Parse(format!("`{key}`: not a number: {v}")))?;
            if !parsed.is_finite() {
                return Err(Error::Parse(format!("`{key}` must be finite")));
            }
            Ok(parsed)
        };
        let version: u32 = get("version")?
            .parse()
            .map_err(|_| Error::Parse("`version` must be an integer".into()))?;
        if version != CALIBRATION_VERSION {
            return Err(Error::Parse(format!(
                "unsupported calibration version {version} (expected {CALIBRATION_VERSION})"
            )));
        }
        let kind = get("kind")?.to_string();
        if !["sparse", "group", "lowrank"].contains(&kind.as_str()) {
            return Err(Error::Parse(format!("unknown kind `{kind}`")));
        }
        let family = SubGaussianFamily::parse(get("family")?)
            .ok_or_else(|| Error::Parse(format!("unknown family `{}`", get("family").unwrap_or(""))))?;
        let scenario_fingerprint = u64::from_str_radix(get("scenario_fingerprint")?, 16)
            .map_err(|_| Error::Parse("`scenario_fingerprint` must be hexadecimal".into()))?;
        let seeds = get("seeds")?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad seed `{s}`"))))
            .collect::<Result<Vec<u64>>>()?;
        Ok(Self {
            version,
            kind,
            family,
            k: num("K")?,
            eta: num("eta")?,
            c_dev: num("C_dev")?,
            c_rho: num("C_rho")?,
            c_xi: num("C_xi")?,
            gamma_level: num("gamma_level")?,
            gamma_doubled: num("gamma_doubled")?,
            scenario_fingerprint,
            seeds,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

const KEYS: [&str; 12] = [
    "version",
    "kind",
    "family",
    "K",
    "eta",
    "C_dev",
    "C_rho",
    "C_xi",
    "gamma_level",
    "gamma_doubled",
    "scenario_fingerprint",
    "seeds",
];

/// 64-bit FNV-1a.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// `||x_t - x*|| <= Delta_t` at every recorded iterate, up to `slack`.
pub fn majorized(result: &RecoveryResult, truth_norm: f64, slack: f64) -> bool {
    result.trace.iter().all(|row| match row.rel_error {
        Some(rel) => rel * truth_norm <= row.delta_t + slack,
        None => false,
    })
}

/// Geometric per-iteration contraction `exp(slope)` of the error over the linear phase.
pub fn observed_contraction(result: &RecoveryResult) -> Option<f64> {
    log_error_slope(&result.trace).map(f64::exp)
}

/// The error entered a linear phase no slower than `rho`.
fn contracts_within(result: &RecoveryResult, rho: f64) -> bool {
    observed_contraction(result).is_some_and(|q| q <= rho + RATE_TOLERANCE)
}

/// Fits `C_dev`, `C_xi` and `C_rho` for the plan's scenario.
///
/// `C_dev` covers `coverage` of the exact deviations on a small cone (vector
/// kinds) or the Monte-Carlo restricted singular values at full size times
/// the safety factor (matrix kinds). `C_xi` is the largest ratio of
/// `xi(S_k) + xi(S_2k)` to `K (gamma + eta)` over training draws. `C_rho` is
/// the smallest constant, found by bisection, for which every noiseless
/// training run stays bounded with an observed contraction no slower than `rho`.
pub fn calibrate_constants(plan: &CalibrationPlan) -> Result<Calibration> {
    let scenario = &plan.scenario;
    scenario.cone.validate()?;
    if plan.seeds.is_empty() || scenario.m_list.is_empty() {
        return Err(Error::Calibration("calibration needs seeds and measurement counts".into()));
    }
    let params = TheoryParams { k: scenario.spec.psi2_norm(), eta: plan.eta };
    let mut calib = Calibration::explicit(
        &scenario.cone,
        scenario.spec.family,
        plan.eta,
        (0.0, 0.0, 0.0),
        plan.complexity_trials,
    );
    calib.seeds = plan.seeds.clone();
    let enlarged_cone = scenario.enlarged_cone();

    let pairs: Vec<(usize, u64)> = scenario
        .m_list
        .iter()
        .flat_map(|&m| plan.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let instances: Vec<Instance> = map_slice(&pairs, |&(m, seed)| scenario.draw(m, 0.0, seed))
        .into_iter()
        .collect::<Result<_>>()?;

    calib.c_dev = match &plan.deviation_cone {
        Some(small) => {
            let opts = DeviationOptions {
                draws: plan.deviation_draws,
                seed: plan.seeds[0],
                spec: scenario.spec,
                params,
                complexity_trials: plan.complexity_trials,
                constant: 0.0,
            };
            let report = verify_deviation_bound(small, &enlarged(small), &plan.deviation_m, &opts)?;
            report.constant_at_coverage(plan.coverage, params)
        }
        None => {
            let ratios = map_slice(&instances, |inst| {
                let m = inst.op.rows();
                let est = rho_monte_carlo(
                    &inst.op,
                    1.0 / m as f64,
                    &scenario.cone,
                    &enlarged_cone,
                    plan.mc_trials,
                    fingerprint(&m.to_le_bytes()),
                )?;
                Ok(plan.safety * est.value / calib.rho_restricted_unit(m))
            });
            ratios.into_iter().collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max)
        }
    };

    let xi_ratios = map_slice(&instances, |inst| {
        let mut rng = stream_rng(fingerprint(&inst.op.rows().to_le_bytes()), 7);
        let raw: Vec<f64> = (0..inst.op.rows()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = norm2(&raw);
        let w: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let total = xi_exact(&inst.op, &w, &scenario.cone)?.value
            + xi_exact(&inst.op, &w, &enlarged_cone)?.value;
        Ok(total / (params.k * (calib.gamma_doubled + params.eta)))
    });
    calib.c_xi = xi_ratios.into_iter().collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max);

    let m_min = *scenario.m_list.iter().min().expect("nonempty");
    let unit = params.k * params.k * (calib.gamma_doubled + params.eta);
    let c_max = MAX_RHO * (m_min as f64).sqrt() / unit;
    let tracks = |c: f64| -> Result<bool> {
        let mut trial = calib.clone();
        trial.c_rho = c;
        let ok = map_slice(&instances, |inst| {
            let truth_norm = inst.truth.norm();
            let mut config = trial.config(scenario, &inst.op, &inst.obs, truth_norm, plan.t_max)?;
            config.target_error = Some(PRECISION_FLOOR);
            Ok(match inst.solve(&config) {
                Ok(result) => contracts_within(&result, config.rho),
                Err(Error::Diverged { .. }) => false,
                Err(e) => return Err(e),
            })
        });
        Ok(ok.into_iter().collect::<Result<Vec<bool>>>()?.into_iter().all(|b| b))
    };
    if !tracks(c_max)? {
        return Err(Error::Calibration(format!(
            "no contraction factor up to {MAX_RHO} at m = {m_min} is met by the training runs"
        )));
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if tracks(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    calib.c_rho = (hi * (1.0 + plan.margin)).min(c_max);
    Ok(calib)
}

impl Calibration {
    fn rho_restricted_unit(&self, m: usize) -> f64 {
        deviation_bound(1.0, self.gamma_level, self.gamma_doubled, m, self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> Calibration {
        Calibration {
            version: CALIBRATION_VERSION,
            kind: "group".into(),
            family: SubGaussianFamily::Rademacher,
            k: 1.2011224087864498,
            eta: 1.0,
            c_dev: 0.3141,
            c_rho: 0.1 + 0.2,
            c_xi: 1e-3,
            gamma_level: 7.25,
            gamma_doubled: 9.75,
            scenario_fingerprint: 0xdead_beef,
            seeds: vec![11, 12, 13],
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let c = record();
        assert_eq!(Calibration::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_rejects_unknown_and_missing_keys() {
        let text = record().to_text();
        let unknown = format!("{text}C_extra = 1\n");
        assert!(matches!(Calibration::parse(&unknown), Err(Error::Parse(_))));
        let missing = text.replace("C_xi = 0.001\n", "");
        assert!(matches!(Calibration::parse(&missing), Err(Error::Parse(_))));
        let dup = format!("{text}eta = 2\n");
        assert!(Calibration::parse(&dup).is_err());
        assert!(Calibration::parse(&text.replace("version = 1", "version = 9")).is_err());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fingerprint(b""), 0xcbf29ce484222325);
        assert_eq!(fingerprint(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fingerprint(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn fingerprint_separates_scenarios() {
        let spec = SubGaussianSpec::gaussian();
        let a = TrackingScenario { cone: ConeSpec::Sparse { n: 100, s: 3 }, m_list: vec![50], spec };
        let mut b = a.clone();
        b.cone = ConeSpec::Sparse { n: 101, s: 3 };
        assert_ne!(a.fingerprint(1.0), b.fingerprint(1.0));
        assert_ne!(a.fingerprint(1.0), a.fingerprint(2.0));
        b.m_list = vec![70];
        b.cone = a.cone.clone();
        assert_eq!(a.fingerprint(1.0), b.fingerprint(1.0));
    }

    #[test]
    fn formulas_follow_the_record() {
        let c = record();
        assert!((c.rho(400) / c.rho(1600) - 2.0).abs() < 1e-12);
        let expected = c.c_dev * c.k * c.k * (c.gamma_level + c.gamma_doubled + 2.0) / 20.0;
        assert!((c.rho_restricted(400) - expected).abs() < 1e-12);
        assert!((c.xi() - c.c_xi * c.k * (c.gamma_doubled + 1.0)).abs() < 1e-15);
    }
}
