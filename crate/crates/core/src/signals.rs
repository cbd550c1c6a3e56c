//! Ground-truth structured signals and structural measurements on iterates.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm2, norm_inf, singular_values};
use crate::par::stream_rng;

/// Disjoint, contiguous cover of `0..n` by index ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Range<usize>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Range<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return invalid("partition needs at least one group");
        }
        let mut next = 0;
        for g in &groups {
            if g.start != next || g.end <= g.start {
                return invalid(format!(
                    "groups must be non-empty and contiguous; found {}..{} after {next}",
                    g.start, g.end
                ));
            }
            next = g.end;
        }
        Ok(Self { groups })
    }

    /// `count` groups of equal size covering `0..n`.
    pub fn uniform(n: usize, count: usize) -> Result<Self> {
        if count == 0 || n == 0 || !n.is_multiple_of(count) {
            return invalid(format!("cannot split {n} entries into {count} equal groups"));
        }
        let size = n / count;
        Self::new((0..count).map(|g| g * size..(g + 1) * size).collect())
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Ambient dimension covered by the partition.
    pub fn dim(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }

    pub fn group_norms(&self, x: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| norm2(&x[g.clone()])).collect()
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), got: n })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalKind {
    Sparse { n: usize, s: usize },
    GroupSparse { partition: GroupPartition, s: usize },
    LowRank { d: usize, r: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalValues {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredSignal {
    pub kind: SignalKind,
    pub values: SignalValues,
}

impl StructuredSignal {
    /// `s` standard Gaussian entries at uniformly random positions.
    pub fn generate_sparse(n: usize, s: usize, seed: u64) -> Result<Self> {
        if n == 0 || s == 0 || s > n {
            return invalid(format!("sparsity must satisfy 1 <= s <= n, got s = {s}, n = {n}"));
        }
        let mut rng = stream_rng(seed, 2);
        let mut x = vec![0.0; n];
        for i in sample(&mut rng, n, s) {
            x[i] = nonzero_gaussian(&mut rng);
        }
        Ok(Self { kind: SignalKind::Sparse { n, s }, values: SignalValues::Vector(x) })
    }

    /// `s` active groups filled with standard Gaussian entries.
    pub fn generate_group_sparse(partition: &GroupPartition, s: usize, seed: u64) -> Result<Self> {
        if s == 0 || s > partition.len() {
            return invalid(format!(
                "active group count must be in 1..={}, got {s}",
                partition.len()
            ));
        }
        let mut rng = stream_rng(seed, 3);
        let mut x = vec![0.0; partition.dim()];
        let mut active: Vec<usize> = sample(&mut rng, partition.len(), s).into_vec();
        active.sort_unstable();
        for g in active {
            for v in &mut x[partition.groups()[g].clone()] {
                *v = nonzero_gaussian(&mut rng);
            }
        }
        Ok(Self {
            kind: SignalKind::GroupSparse { partition: partition.clone(), s },
            values: SignalValues::Vector(x),
        })
    }

    /// `X = U V^T` with `U, V` of shape `d x r` and i.i.d. standard Gaussian entries.
    pub fn generate_low_rank(d: usize, r: usize, seed: u64) -> Result<Self> {
        if d == 0 || r == 0 || r > d {
            return invalid(format!("rank must satisfy 1 <= r <= d, got r = {r}, d = {d}"));
        }
        let mut rng = stream_rng(seed, 4);
        let mut draw = |_, _| -> f64 { StandardNormal.sample(&mut rng) };
        let u = DMatrix::from_fn(d, r, &mut draw);
        let v = DMatrix::from_fn(d, r, &mut draw);
        Ok(Self {
            kind: SignalKind::LowRank { d, r },
            values: SignalValues::Matrix(&u * v.transpose()),
        })
    }

    /// All-zero signal of the given kind.
    pub fn zero(kind: SignalKind) -> Self {
        let values = match &kind {
            SignalKind::Sparse { n, .. } => SignalValues::Vector(vec![0.0; *n]),
            SignalKind::GroupSparse { partition, .. } => {
                SignalValues::Vector(vec![0.0; partition.dim()])
            }
            SignalKind::LowRank { d, .. } => SignalValues::Matrix(DMatrix::zeros(*d, *d)),
        };
        Self { kind, values }
    }

    /// Flat values; matrices are column-stacked.
    pub fn vectorized(&self) -> Vec<f64> {
        match &self.values {
            SignalValues::Vector(v) => v.clone(),
            SignalValues::Matrix(m) => m.as_slice().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.values {
            SignalValues::Vector(v) => v.len(),
            SignalValues::Matrix(m) => m.len(),
        }
    }

    /// l2 (or Frobenius) norm.
    pub fn norm(&self) -> f64 {
        match &self.values {
            SignalValues::Vector(v) => norm2(v),
            SignalValues::Matrix(m) => m.norm(),
        }
    }
}

fn nonzero_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = StandardNormal.sample(rng);
        if v != 0.0 {
            return v;
        }
    }
}

/// Zero threshold used for support tests: `1e-9 * max(1, ||x||_inf)`.
pub fn default_zero_tol(x: &[f64]) -> f64 {
    1e-9 * norm_inf(x).max(1.0)
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Number of indices where `|x_i| > zero_tol` but the truth vanishes.
pub fn support_leakage(x: &[f64], truth: &StructuredSignal, zero_tol: f64) -> Result<usize> {
    let t = match (&truth.kind, &truth.values) {
        (SignalKind::Sparse { .. }, SignalValues::Vector(t)) => t,
        _ => return Err(Error::KindMismatch("support leakage needs a sparse truth")),
    };
    if x.len() != t.len() {
        return Err(Error::DimensionMismatch { expected: t.len(), got: x.len() });
    }
    Ok(x.iter().zip(t).filter(|(xi, ti)| xi.abs() > zero_tol && **ti == 0.0).count())
}

/// Number of groups where `||x_g||_2 > zero_tol` but the truth group vanishes.
pub fn group_leakage(
    x: &[f64],
    truth: &StructuredSignal,
    partition: &GroupPartition,
    zero_tol: f64,
) -> Result<usize> {
    let t = match (&truth.kind, &truth.values) {
        (SignalKind::GroupSparse { .. }, SignalValues::Vector(t)) => t,
        _ => return Err(Error::KindMismatch("group leakage needs a group-sparse truth")),
    };
    partition.check_dim(x.len())?;
    partition.check_dim(t.len())?;
    Ok(partition
        .groups()
        .iter()
        .filter(|g| norm2(&x[(*g).clone()]) > zero_tol && norm2(&t[(*g).clone()]) == 0.0)
        .count())
}

/// Count of singular values above `rel_tol * sigma_max`; zero for the zero matrix.
pub fn numerical_rank(x: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(x);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}
