//! Closed-form proximal maps and the l1-ball projection.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm1, norm2, sorted_svd};
use crate::signals::GroupPartition;

/// Prox threshold `tau = lambda_t * mu`; always nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ProxThreshold(f64);

impl ProxThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau >= 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            invalid(format!("threshold must be finite and nonnegative, got {tau}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[inline]
fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// `sign(v_i) * max(|v_i| - tau, 0)`, the prox of `tau * ||.||_1`.
pub fn soft_threshold(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    let tau = ProxThreshold::new(tau)?.get();
    Ok(v.iter().map(|&x| shrink(x, tau)).collect())
}

pub(crate) fn soft_threshold_in_place(v: &mut [f64], tau: f64) {
    for x in v {
        *x = shrink(*x, tau);
    }
}

/// Block shrinkage `v_g * max(1 - tau / ||v_g||, 0)`, the prox of `tau * ||.||_{2,1}`.
pub fn group_soft_threshold(v: &[f64], tau: f64, partition: &GroupPartition) -> Result<Vec<f64>> {
    let tau = ProxThreshold::new(tau)?.get();
    partition.check_dim(v.len())?;
    let mut out = v.to_vec();
    group_soft_threshold_in_place(&mut out, tau, partition);
    Ok(out)
}

pub(crate) fn group_soft_threshold_in_place(v: &mut [f64], tau: f64, partition: &GroupPartition) {
    for g in partition.groups() {
        let block = &mut v[g.clone()];
        let norm = norm2(block);
        let scale = if norm > tau { 1.0 - tau / norm } else { 0.0 };
        for x in block {
            *x *= scale;
        }
    }
}

/// `U diag(max(sigma - tau, 0)) V^T`, the prox of `tau * ||.||_*`.
pub fn singular_value_threshold(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let tau = ProxThreshold::new(tau)?.get();
    if m.nrows() != m.ncols() {
        return invalid(format!("expected a square matrix, got {} x {}", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("singular value threshold input"));
    }
    Ok(svt_unchecked(m, tau))
}

pub(crate) fn svt_unchecked(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk <= 0.0 {
            break;
        }
        out.ger(shrunk, &svd.u.column(k), &svd.v_t.row(k).transpose(), 1.0);
    }
    out
}

/// Euclidean projection onto `{x : ||x||_1 <= radius}` by sort-and-shift.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return invalid(format!("radius must be nonnegative, got {radius}"));
    }
    let mut out = v.to_vec();
    project_l1_ball_in_place(&mut out, radius);
    Ok(out)
}

pub(crate) fn project_l1_ball_in_place(v: &mut [f64], radius: f64) {
    if norm1(v) <= radius {
        return;
    }
    if radius == 0.0 {
        v.fill(0.0);
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    // theta = (sum_{i<=k} u_i - R) / k for the largest k with u_k > theta.
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    soft_threshold_in_place(v, theta.max(0.0));
}
