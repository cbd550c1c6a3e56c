//! Sub-Gaussian measurement operators and noisy observations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::par::stream_rng;
use crate::signals::StructuredSignal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubGaussianFamily {
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]` when normalized, `[-1, 1]` otherwise.
    UniformRescaled,
}

impl SubGaussianFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::UniformRescaled => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Self::Gaussian),
            "rademacher" => Some(Self::Rademacher),
            "uniform" | "uniform-rescaled" => Some(Self::UniformRescaled),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubGaussianSpec {
    pub family: SubGaussianFamily,
    /// Entries have unit variance, so rows are isotropic.
    pub unit_variance: bool,
}

impl SubGaussianSpec {
    pub const fn new(family: SubGaussianFamily) -> Self {
        Self { family, unit_variance: true }
    }

    pub const fn gaussian() -> Self {
        Self::new(SubGaussianFamily::Gaussian)
    }

    fn uniform_half_width(&self) -> f64 {
        if self.unit_variance {
            3f64.sqrt()
        } else {
            1.0
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            SubGaussianFamily::Gaussian => StandardNormal.sample(rng),
            SubGaussianFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SubGaussianFamily::UniformRescaled => {
                let a = self.uniform_half_width();
                rng.random_range(-a..=a)
            }
        }
    }

    /// Orlicz psi_2 norm of a single entry, `inf { t : E exp(X^2/t^2) <= 2 }`.
    ///
    /// Used as the sub-Gaussian constant `K` of a row.
    pub fn psi2_norm(&self) -> f64 {
        match self.family {
            // E exp(g^2/t^2) = (1 - 2/t^2)^{-1/2}
            SubGaussianFamily::Gaussian => (8.0f64 / 3.0).sqrt(),
            // exp(1/t^2) = 2
            SubGaussianFamily::Rademacher => 1.0 / std::f64::consts::LN_2.sqrt(),
            SubGaussianFamily::UniformRescaled => uniform_psi2(self.uniform_half_width()),
        }
    }
}

/// Mean of `exp(x^2/t^2)` for `x` uniform on `[-a, a]`, by composite Simpson.
pub(crate) fn uniform_orlicz_mean(a: f64, t: f64) -> f64 {
    let n = 2000;
    let h = a / n as f64;
    let f = |x: f64| (x * x / (t * t)).exp();
    let mut acc = f(0.0) + f(a);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0 / a
}

fn uniform_psi2(a: f64) -> f64 {
    // The Orlicz mean is decreasing in t; bracket and bisect.
    let (mut lo, mut hi) = (0.5 * a, 4.0 * a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if uniform_orlicz_mean(a, mid) > 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensingMode {
    Vector,
    /// Acts on `side x side` matrices through column-stacking vectorization.
    Matrix { side: usize },
}

/// Dense `m x n` measurement map, stored row-major.
#[derive(Clone, Debug)]
pub struct SensingOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    spec: SubGaussianSpec,
    mode: SensingMode,
}

impl SensingOperator {
    /// Draws an `m x n` operator with i.i.d. entries from `spec`.
    pub fn generate(m: usize, n: usize, spec: SubGaussianSpec, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid(format!("sensing dimensions must be positive, got {m} x {n}"));
        }
        let mut rng = stream_rng(seed, 0);
        let entries = (0..m * n).map(|_| spec.sample(&mut rng)).collect();
        Ok(Self { rows: m, cols: n, entries, spec, mode: SensingMode::Vector })
    }

    /// Draws an operator acting on `d x d` matrices (`n = d^2`).
    pub fn generate_matrix(m: usize, d: usize, spec: SubGaussianSpec, seed: u64) -> Result<Self> {
        let mut op = Self::generate(m, d * d, spec, seed)?;
        op.mode = SensingMode::Matrix { side: d };
        Ok(op)
    }

    /// Wraps explicit row-major entries.
    pub fn from_entries(
        m: usize,
        n: usize,
        entries: Vec<f64>,
        spec: SubGaussianSpec,
        mode: SensingMode,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("sensing dimensions must be positive");
        }
        if entries.len() != m * n {
            return Err(Error::DimensionMismatch { expected: m * n, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensing entries"));
        }
        if let SensingMode::Matrix { side } = mode {
            if side * side != n {
                return invalid(format!("matrix mode needs n = d^2, got n = {n}, d = {side}"));
            }
        }
        Ok(Self { rows: m, cols: n, entries, spec, mode })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spec(&self) -> SubGaussianSpec {
        self.spec
    }

    pub fn mode(&self) -> SensingMode {
        self.mode
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.cols, x.len())?;
        check_len(self.rows, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
        Ok(())
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.apply_adjoint_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = A^T v`
    pub fn apply_adjoint_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.rows, v.len())?;
        check_len(self.cols, out.len())?;
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, self.row(i), out);
            }
        }
        Ok(())
    }

    fn side(&self) -> Result<usize> {
        match self.mode {
            SensingMode::Matrix { side } => Ok(side),
            SensingMode::Vector => Err(Error::ModeMismatch("operator is in vector mode")),
        }
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = self.side()?;
        if x.nrows() != d || x.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d * d, got: x.len() });
        }
        // nalgebra storage is column-major, which is exactly vec(X).
        self.apply(x.as_slice())
    }

    pub fn apply_matrix_adjoint(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.side()?;
        let flat = self.apply_adjoint(v)?;
        Ok(DMatrix::from_vec(d, d, flat))
    }

    /// `x - mu * A^T (A x - y)`, reusing the two scratch buffers.
    pub(crate) fn gradient_step(
        &self,
        x: &[f64],
        y: &[f64],
        mu: f64,
        residual: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.apply_into(x, residual)?;
        for (r, yi) in residual.iter_mut().zip(y) {
            *r -= yi;
        }
        self.apply_adjoint_into(residual, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - mu * *o;
        }
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Noisy measurements `y = A x* + w`.
#[derive(Clone, Debug)]
pub struct Observation {
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    /// l2 bound on the noise; equals the realized `||w||_2` when drawn.
    pub delta: f64,
    pub sigma: f64,
}

impl Observation {
    /// Unit noise direction `w / ||w||`, or `None` for noiseless data.
    pub fn noise_direction(&self) -> Option<Vec<f64>> {
        if self.delta > 0.0 {
            Some(self.noise.iter().map(|w| w / self.delta).collect())
        } else {
            None
        }
    }

    /// Observation from explicit measurements with a hard noise bound.
    pub fn from_measurements(y: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return invalid("noise bound must be nonnegative");
        }
        let noise = vec![0.0; y.len()];
        Ok(Self { y, noise, delta, sigma: 0.0 })
    }
}

/// Synthesizes `y = A x* + w` with `w ~ N(0, sigma^2 I)`.
pub fn observe(
    op: &SensingOperator,
    truth: &StructuredSignal,
    sigma: f64,
    seed: u64,
) -> Result<Observation> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be a finite nonnegative number, got {sigma}"));
    }
    let clean = op.apply(&truth.vectorized())?;
    let mut rng = stream_rng(seed, 1);
    let noise: Vec<f64> = if sigma == 0.0 {
        vec![0.0; op.rows()]
    } else {
        (0..op.rows())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect()
    };
    let y = clean.iter().zip(&noise).map(|(a, w)| a + w).collect();
    let delta = norm2(&noise);
    Ok(Observation { y, noise, delta, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::StructuredSignal;

    fn naive_apply(op: &SensingOperator, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; op.rows()];
        for i in 0..op.rows() {
            for j in 0..op.cols() {
                out[i] += op.entries()[i * op.cols() + j] * x[j];
            }
        }
        out
    }

    fn naive_adjoint(op: &SensingOperator, v: &[f64]) -> Vec<f64> {
        // explicit transpose, then multiply
        let (m, n) = (op.rows(), op.cols());
        let mut t = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                t[j * m + i] = op.entries()[i * n + j];
            }
        }
        (0..n).map(|j| (0..m).map(|i| t[j * m + i] * v[i]).sum()).collect()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = SensingOperator::generate(3, 4, SubGaussianSpec::gaussian(), 7).unwrap();
        let b = SensingOperator::generate(3, 4, SubGaussianSpec::gaussian(), 7).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!((a.rows(), a.cols()), (3, 4));
        let c = SensingOperator::generate(3, 4, SubGaussianSpec::gaussian(), 8).unwrap();
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(SensingOperator::generate(0, 4, SubGaussianSpec::gaussian(), 1).is_err());
        assert!(SensingOperator::generate(4, 0, SubGaussianSpec::gaussian(), 1).is_err());
    }

    #[test]
    fn gaussian_column_moments() {
        let (m, n) = (2000, 100);
        let op = SensingOperator::generate(m, n, SubGaussianSpec::gaussian(), 1).unwrap();
        for j in 0..n {
            let col: Vec<f64> = (0..m).map(|i| op.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 0.1, "column {j} mean {mean}");
            assert!((0.9..1.1).contains(&var), "column {j} variance {var}");
        }
        let all_mean = op.entries().iter().sum::<f64>() / (m * n) as f64;
        assert!(all_mean.abs() < 0.05);
    }

    #[test]
    fn rademacher_support() {
        let spec = SubGaussianSpec::new(SubGaussianFamily::Rademacher);
        let op = SensingOperator::generate(2000, 100, spec, 1).unwrap();
        assert!(op.entries().iter().all(|&v| v == 1.0 || v == -1.0));
        let mean = op.entries().iter().sum::<f64>() / op.entries().len() as f64;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn uniform_family_has_unit_variance() {
        let spec = SubGaussianSpec::new(SubGaussianFamily::UniformRescaled);
        let op = SensingOperator::generate(500, 100, spec, 3).unwrap();
        let a = 3f64.sqrt();
        assert!(op.entries().iter().all(|v| v.abs() <= a));
        let var = op.entries().iter().map(|v| v * v).sum::<f64>() / op.entries().len() as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn psi2_constants_satisfy_their_defining_equation() {
        let g = SubGaussianSpec::gaussian().psi2_norm();
        assert!(((1.0 - 2.0 / (g * g)).powf(-0.5) - 2.0).abs() < 1e-12);
        let r = SubGaussianSpec::new(SubGaussianFamily::Rademacher).psi2_norm();
        assert!(((1.0 / (r * r)).exp() - 2.0).abs() < 1e-12);
        let u = SubGaussianSpec::new(SubGaussianFamily::UniformRescaled).psi2_norm();
        assert!((uniform_orlicz_mean(3f64.sqrt(), u) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identity_operator_and_zero_input() {
        let n = 4;
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        let op = SensingOperator::from_entries(n, n, e, SubGaussianSpec::gaussian(), SensingMode::Vector)
            .unwrap();
        let x = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.apply_adjoint(&x).unwrap(), x);
        assert_eq!(op.apply(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn apply_and_adjoint_match_naive_products() {
        let op = SensingOperator::generate(5, 8, SubGaussianSpec::gaussian(), 11).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).cos()).collect();
        let v: Vec<f64> = (0..5).map(|i| (i as f64 * 1.1).sin() + 0.2).collect();
        let fast = op.apply(&x).unwrap();
        for (a, b) in fast.iter().zip(naive_apply(&op, &x)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let fast_t = op.apply_adjoint(&v).unwrap();
        for (a, b) in fast_t.iter().zip(naive_adjoint(&op, &v)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = SensingOperator::generate(3, 4, SubGaussianSpec::gaussian(), 1).unwrap();
        assert!(matches!(op.apply(&[1.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(op.apply_adjoint(&[1.0; 4]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            op.apply_matrix(&DMatrix::zeros(2, 2)),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn matrix_mode_uses_column_stacking() {
        let d = 3;
        let op = SensingOperator::generate_matrix(7, d, SubGaussianSpec::gaussian(), 4).unwrap();
        assert!(op.apply_matrix(&DMatrix::zeros(d, d)).unwrap().iter().all(|&v| v == 0.0));
        let x = DMatrix::from_fn(d, d, |r, c| (r as f64 + 1.0) * 0.5 - c as f64);
        let mut stacked = Vec::new();
        for c in 0..d {
            for r in 0..d {
                stacked.push(x[(r, c)]);
            }
        }
        let via_matrix = op.apply_matrix(&x).unwrap();
        let via_vector = naive_apply(&op, &stacked);
        for (a, b) in via_matrix.iter().zip(via_vector) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(SensingOperator::from_entries(
            2,
            5,
            vec![0.0; 10],
            SubGaussianSpec::gaussian(),
            SensingMode::Matrix { side: 2 }
        )
        .is_err());
    }

    #[test]
    fn isotropy_of_gaussian_rows() {
        let (m, n) = (10_000, 20);
        let op = SensingOperator::generate(m, n, SubGaussianSpec::gaussian(), 2).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let s: f64 = (0..m).map(|i| op.row(i)[a] * op.row(i)[b]).sum::<f64>() / m as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        assert!(worst < 0.1, "max deviation {worst}");
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let op = SensingOperator::generate(20, 30, SubGaussianSpec::gaussian(), 5).unwrap();
        let truth = StructuredSignal::generate_sparse(30, 3, 2).unwrap();
        let obs = observe(&op, &truth, 0.0, 9).unwrap();
        assert_eq!(obs.delta, 0.0);
        assert_eq!(obs.y, op.apply(&truth.vectorized()).unwrap());
        assert!(obs.noise_direction().is_none());
    }

    #[test]
    fn noise_level_concentrates_and_is_reproducible() {
        let m = 800;
        let op = SensingOperator::generate(m, 10, SubGaussianSpec::gaussian(), 5).unwrap();
        let truth = StructuredSignal::generate_sparse(10, 2, 2).unwrap();
        let obs = observe(&op, &truth, 0.001, 3).unwrap();
        let expected = 0.001 * (m as f64).sqrt();
        assert!((obs.delta - expected).abs() < 0.5 * expected);
        assert!((norm2(&obs.noise) - obs.delta).abs() == 0.0);
        let again = observe(&op, &truth, 0.001, 3).unwrap();
        assert_eq!(obs.noise, again.noise);
        assert!(observe(&op, &truth, -1.0, 3).is_err());
    }
}
