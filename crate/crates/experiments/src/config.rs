//! Experiment configuration.
//!
//! Every suite starts from built-in defaults. An optional TOML file overrides
//! them key by key, and the `--seed`, `--m` and `--out` flags override the
//! file. Unknown keys and keys that do not apply to the selected problem kind
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use pgh_core::theory::{ConeSpec, TrackingScenario};
use pgh_core::{GroupPartition, Structure, SubGaussianFamily, SubGaussianSpec};
use serde::Deserialize;

use crate::error::{config_err, ExpError};

/// Directory of the shipped calibration records.
pub const DEFAULT_CALIBRATION_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/calibration");

/// Training seeds of the shipped calibration records.
pub const TRAINING_SEEDS: [u64; 3] = [1001, 1002, 1003];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Fig1,
    Fig2,
    Fig3,
    Invariants,
    Calibrate,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Invariants => "invariants",
            Self::Calibrate => "calibrate",
        }
    }

    /// Problem kinds the suite runs when the config does not pick one.
    pub fn kinds(self) -> &'static [ProblemKind] {
        use ProblemKind::*;
        match self {
            Self::Fig1 => &[Sparse],
            Self::Fig2 => &[Group],
            Self::Fig3 => &[LowRank],
            Self::Invariants | Self::Calibrate => &[Sparse, Group, LowRank],
        }
    }

    pub fn default_config(self, kind: ProblemKind) -> ExperimentConfig {
        let (problem, m) = match (self, kind) {
            (Self::Invariants, ProblemKind::Sparse) => (Problem::Sparse { n: 40, s: 2 }, vec![30]),
            (Self::Invariants, ProblemKind::Group) => {
                (Problem::Group { n: 12, groups: 6, s: 1 }, vec![20])
            }
            (Self::Invariants, ProblemKind::LowRank) => (Problem::LowRank { d: 8, r: 1 }, vec![40]),
            (_, ProblemKind::Sparse) => (Problem::Sparse { n: 2000, s: 5 }, vec![800, 1300, 1800]),
            (_, ProblemKind::Group) => {
                (Problem::Group { n: 2500, groups: 500, s: 5 }, vec![1200, 1800, 2400])
            }
            (_, ProblemKind::LowRank) => (Problem::LowRank { d: 50, r: 2 }, vec![1600, 1936, 2304]),
        };
        let calibrated = ConstantSource::Calibrated {
            path: Path::new(DEFAULT_CALIBRATION_DIR).join(format!("{}.calib", kind.name())),
        };
        let (sigma, seeds, t_max, constants, out) = match self {
            Self::Invariants => (
                vec![0.0, 0.01],
                (1..=20).collect(),
                100,
                ConstantSource::Oracle { trials: 30, safety: 2.0 },
                PathBuf::from("out/invariants"),
            ),
            Self::Calibrate => (
                vec![0.0],
                TRAINING_SEEDS.to_vec(),
                1000,
                calibrated,
                PathBuf::from(DEFAULT_CALIBRATION_DIR),
            ),
            _ => (
                vec![0.0, 0.001],
                vec![1, 2, 3],
                500,
                calibrated,
                PathBuf::from(format!("out/{}", self.name())),
            ),
        };
        ExperimentConfig {
            suite: self,
            problem,
            m,
            sigma,
            seeds,
            t_max,
            family: SubGaussianFamily::Gaussian,
            constants,
            delta0: Delta0Source::Truth,
            timing: false,
            out,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Sparse,
    Group,
    LowRank,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sparse => "sparse",
            Self::Group => "group",
            Self::LowRank => "lowrank",
        }
    }
}

/// Ambient dimensions and structure level.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Sparse { n: usize, s: usize },
    /// `groups` equal contiguous groups covering `0..n`.
    Group { n: usize, groups: usize, s: usize },
    /// `d x d` matrices of rank `r`.
    LowRank { d: usize, r: usize },
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Sparse { .. } => ProblemKind::Sparse,
            Self::Group { .. } => ProblemKind::Group,
            Self::LowRank { .. } => ProblemKind::LowRank,
        }
    }

    pub fn cone(&self) -> Result<ConeSpec, ExpError> {
        let cone = match *self {
            Self::Sparse { n, s } => ConeSpec::Sparse { n, s },
            Self::Group { n, groups, s } => {
                let partition = GroupPartition::uniform(n, groups)
                    .map_err(|e| ExpError::Config(e.to_string()))?;
                ConeSpec::GroupSparse { partition, s }
            }
            Self::LowRank { d, r } => ConeSpec::LowRank { d, r },
        };
        cone.validate().map_err(|e| ExpError::Config(e.to_string()))?;
        Ok(cone)
    }

    pub fn structure(&self) -> Result<Structure, ExpError> {
        Ok(match self.cone()? {
            ConeSpec::Sparse { s, .. } => Structure::Sparse { s },
            ConeSpec::GroupSparse { partition, s } => Structure::Group { partition, s },
            ConeSpec::LowRank { r, .. } => Structure::LowRank { r },
        })
    }
}

/// Where the solver constants come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstantSource {
    /// Persisted record written by `pgh calibrate`.
    Calibrated { path: PathBuf },
    /// Fixed values used for every `m`.
    Explicit { rho: f64, rho_restricted: f64, xi: f64, xi_restricted: f64 },
    /// Restricted singular values of each drawn operator; small instances only.
    Oracle { trials: usize, safety: f64 },
}

impl ConstantSource {
    pub fn describe(&self) -> String {
        match self {
            Self::Calibrated { path } => format!("calibrated ({})", path.display()),
            Self::Explicit { rho, rho_restricted, xi, xi_restricted } => format!(
                "explicit (rho = {rho}, rho_restricted = {rho_restricted}, xi = {xi}, xi_restricted = {xi_restricted})"
            ),
            Self::Oracle { trials, safety } => {
                format!("oracle (exact enumeration; Monte Carlo with {trials} trials x {safety} for low rank)")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delta0Source {
    /// `||x*||`, the tightest valid initial bound.
    Truth,
    /// The data-driven over-estimate `||A^T y|| sqrt(n) / m`.
    Data,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub problem: Problem,
    pub m: Vec<usize>,
    /// Noise levels; each is swept over every `m`.
    pub sigma: Vec<f64>,
    pub seeds: Vec<u64>,
    pub t_max: usize,
    pub family: SubGaussianFamily,
    pub constants: ConstantSource,
    pub delta0: Delta0Source,
    /// Record per-iteration wall time; off keeps trace files reproducible.
    pub timing: bool,
    pub out: PathBuf,
}

/// Command-line overrides, applied after the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub m: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<ProblemKind>,
    n: Option<usize>,
    groups: Option<usize>,
    s: Option<usize>,
    d: Option<usize>,
    r: Option<usize>,
    m: Option<Vec<usize>>,
    sigma: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    t_max: Option<usize>,
    family: Option<String>,
    constants: Option<ConstantsKey>,
    calibration: Option<PathBuf>,
    rho: Option<f64>,
    rho_restricted: Option<f64>,
    xi: Option<f64>,
    xi_restricted: Option<f64>,
    oracle_trials: Option<usize>,
    oracle_safety: Option<f64>,
    delta0: Option<Delta0Source>,
    timing: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ConstantsKey {
    Calibrated,
    Explicit,
    Oracle,
}

/// Configs of `suite`, one per problem kind it runs.
pub fn load(
    suite: Suite,
    path: Option<&Path>,
    overrides: &Overrides,
) -> Result<Vec<ExperimentConfig>, ExpError> {
    let raw = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| ExpError::Config(format!("{}: {e}", p.display())))?;
            parse_raw(&text).map_err(|e| ExpError::Config(format!("{}: {e}", p.display())))?
        }
        None => RawConfig::default(),
    };
    build(suite, raw, overrides)
}

/// Configs of `suite` from TOML text.
pub fn from_str(suite: Suite, text: &str, overrides: &Overrides) -> Result<Vec<ExperimentConfig>, ExpError> {
    build(suite, parse_raw(text).map_err(ExpError::Config)?, overrides)
}

fn parse_raw(text: &str) -> Result<RawConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn build(suite: Suite, raw: RawConfig, overrides: &Overrides) -> Result<Vec<ExperimentConfig>, ExpError> {
    let kinds: Vec<ProblemKind> = match raw.kind {
        Some(k) if suite.kinds().contains(&k) => vec![k],
        Some(k) => {
            return config_err(format!("kind {} is not part of the {} suite", k.name(), suite.name()))
        }
        None => suite.kinds().to_vec(),
    };
    kinds
        .into_iter()
        .map(|kind| {
            let mut cfg = suite.default_config(kind);
            cfg.apply(&raw)?;
            cfg.apply_overrides(overrides);
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

fn not_applicable<T>(key: &str, kind: ProblemKind) -> Result<T, ExpError> {
    config_err(format!("key `{key}` does not apply to kind {}", kind.name()))
}

impl ExperimentConfig {
    pub fn kind(&self) -> ProblemKind {
        self.problem.kind()
    }

    fn apply(&mut self, raw: &RawConfig) -> Result<(), ExpError> {
        let kind = self.kind();
        match &mut self.problem {
            Problem::Sparse { n, s } => {
                for (key, v) in [("groups", raw.groups), ("d", raw.d), ("r", raw.r)] {
                    if v.is_some() {
                        return not_applicable(key, kind);
                    }
                }
                *n = raw.n.unwrap_or(*n);
                *s = raw.s.unwrap_or(*s);
            }
            Problem::Group { n, groups, s } => {
                for (key, v) in [("d", raw.d), ("r", raw.r)] {
                    if v.is_some() {
                        return not_applicable(key, kind);
                    }
                }
                *n = raw.n.unwrap_or(*n);
                *groups = raw.groups.unwrap_or(*groups);
                *s = raw.s.unwrap_or(*s);
            }
            Problem::LowRank { d, r } => {
                for (key, v) in [("n", raw.n), ("groups", raw.groups), ("s", raw.s)] {
                    if v.is_some() {
                        return not_applicable(key, kind);
                    }
                }
                *d = raw.d.unwrap_or(*d);
                *r = raw.r.unwrap_or(*r);
            }
        }
        if let Some(m) = &raw.m {
            self.m = m.clone();
        }
        if let Some(sigma) = &raw.sigma {
            self.sigma = sigma.clone();
        }
        if let Some(seeds) = &raw.seeds {
            self.seeds = seeds.clone();
        }
        self.t_max = raw.t_max.unwrap_or(self.t_max);
        if let Some(name) = &raw.family {
            self.family = SubGaussianFamily::parse(name).ok_or_else(|| {
                ExpError::Config(format!(
                    "unknown family `{name}`; expected gaussian, rademacher or uniform"
                ))
            })?;
        }
        self.delta0 = raw.delta0.unwrap_or(self.delta0);
        self.timing = raw.timing.unwrap_or(self.timing);
        if let Some(out) = &raw.out {
            self.out = out.clone();
        }
        self.apply_constants(raw)
    }

    fn apply_constants(&mut self, raw: &RawConfig) -> Result<(), ExpError> {
        let explicit = [
            ("rho", raw.rho),
            ("rho_restricted", raw.rho_restricted),
            ("xi", raw.xi),
            ("xi_restricted", raw.xi_restricted),
        ];
        let oracle = [("oracle_trials", raw.oracle_trials.is_some()), ("oracle_safety", raw.oracle_safety.is_some())];
        let selected = match (raw.constants, &self.constants) {
            (Some(key), _) => key,
            (None, ConstantSource::Calibrated { .. }) => ConstantsKey::Calibrated,
            (None, ConstantSource::Explicit { .. }) => ConstantsKey::Explicit,
            (None, ConstantSource::Oracle { .. }) => ConstantsKey::Oracle,
        };
        let stray = |key: &str| {
            config_err(format!("key `{key}` needs a different `constants` source"))
        };
        if selected != ConstantsKey::Calibrated && raw.calibration.is_some() {
            return stray("calibration");
        }
        if selected != ConstantsKey::Explicit {
            if let Some((key, _)) = explicit.iter().find(|(_, v)| v.is_some()) {
                return stray(key);
            }
        }
        if selected != ConstantsKey::Oracle {
            if let Some((key, _)) = oracle.iter().find(|(_, set)| *set) {
                return stray(key);
            }
        }
        self.constants = match selected {
            ConstantsKey::Calibrated => {
                let path = match (&raw.calibration, &self.constants) {
                    (Some(p), _) => p.clone(),
                    (None, ConstantSource::Calibrated { path }) => path.clone(),
                    (None, _) => Path::new(DEFAULT_CALIBRATION_DIR).join(format!("{}.calib", self.kind().name())),
                };
                ConstantSource::Calibrated { path }
            }
            ConstantsKey::Explicit => {
                let mut values = [0.0; 4];
                for (slot, (key, v)) in values.iter_mut().zip(explicit) {
                    *slot = v.ok_or_else(|| {
                        ExpError::Config(format!("explicit constants need key `{key}`"))
                    })?;
                }
                let [rho, rho_restricted, xi, xi_restricted] = values;
                ConstantSource::Explicit { rho, rho_restricted, xi, xi_restricted }
            }
            ConstantsKey::Oracle => {
                let (trials, safety) = match self.constants {
                    ConstantSource::Oracle { trials, safety } => (trials, safety),
                    _ => (30, 2.0),
                };
                ConstantSource::Oracle {
                    trials: raw.oracle_trials.unwrap_or(trials),
                    safety: raw.oracle_safety.unwrap_or(safety),
                }
            }
        };
        Ok(())
    }

    fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if let Some(m) = &o.m {
            self.m = m.clone();
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let positive = [
            match self.problem {
                Problem::Sparse { n, .. } | Problem::Group { n, .. } => ("n", n),
                Problem::LowRank { d, .. } => ("d", d),
            },
            ("t_max", self.t_max),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return config_err(format!("`{key}` must be positive"));
        }
        self.problem.cone()?;
        if self.m.is_empty() || self.m.contains(&0) {
            return config_err("`m` must be a nonempty list of positive counts");
        }
        if self.seeds.is_empty() {
            return config_err("`seeds` must be nonempty");
        }
        if self.sigma.is_empty() || self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return config_err("`sigma` must be a nonempty list of finite nonnegative levels");
        }
        match self.constants {
            ConstantSource::Explicit { rho, rho_restricted, xi, xi_restricted } => {
                if !(0.0..1.0).contains(&rho) {
                    return config_err(format!("explicit `rho` must lie in [0, 1), got {rho}"));
                }
                if [rho_restricted, xi, xi_restricted].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return config_err("explicit constants must be finite and nonnegative");
                }
            }
            ConstantSource::Oracle { trials, safety } => {
                if trials == 0 || !(safety.is_finite() && safety > 0.0) {
                    return config_err("`oracle_trials` and `oracle_safety` must be positive");
                }
            }
            ConstantSource::Calibrated { .. } => {}
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<TrackingScenario, ExpError> {
        Ok(TrackingScenario {
            cone: self.problem.cone()?,
            m_list: self.m.clone(),
            spec: SubGaussianSpec::new(self.family),
        })
    }
}
