//! Small dense kernels shared by the solvers and estimators.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize the loop.
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum::<f64>();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// l2 norm of the `k` largest-magnitude entries.
pub fn top_k_norm(values: &[f64], k: usize) -> f64 {
    let mut sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    top_k_sum_in_place(&mut sq, k).sqrt()
}

/// Sum of the `k` largest entries of `values`, reordering it in place.
pub fn top_k_sum_in_place(values: &mut [f64], k: usize) -> f64 {
    let k = k.min(values.len());
    if k == 0 {
        return 0.0;
    }
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    values[..k].iter().sum()
}

/// Indices of the `k` largest entries of `score`, in ascending index order.
pub fn top_k_indices(score: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(score.len());
    let mut idx: Vec<usize> = (0..score.len()).collect();
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, |&a, &b| score[b].total_cmp(&score[a]));
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Thin SVD with singular values sorted in descending order.
///
/// Singular vectors of zero singular values are unspecified.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

/// `[[0, M], [M^T, 0]]`, whose eigenpairs are `(+-sigma_i, (u_i, +-v_i) / sqrt 2)`.
fn jordan_wielandt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut b = DMatrix::zeros(r + c, r + c);
    b.view_mut((0, r), (r, c)).copy_from(m);
    b.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    b
}

/// SVD through the symmetric eigendecomposition of the Jordan-Wielandt
/// matrix. nalgebra's bidiagonal SVD loses accuracy on rank-deficient
/// input, which iterates of the low-rank solver routinely are.
pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let (r, c) = m.shape();
    let k = r.min(c);
    let eig = SymmetricEigen::new(jordan_wielandt(m));
    let mut order: Vec<usize> = (0..r + c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(k);
    let singular_values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let u = DMatrix::from_fn(r, k, |row, col| SQRT_2 * eig.eigenvectors[(row, order[col])]);
    let v_t = DMatrix::from_fn(k, c, |row, col| SQRT_2 * eig.eigenvectors[(r + col, order[row])]);
    SortedSvd { u, singular_values, v_t }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows().min(m.ncols());
    let mut ev: Vec<f64> = jordan_wielandt(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.truncate(k);
    ev.iter_mut().for_each(|v| *v = v.max(0.0));
    ev
}

/// Rank-`r` truncation `U_r diag(s_r) V_r^T` of a sorted SVD.
pub fn truncate(svd: &SortedSvd, r: usize) -> DMatrix<f64> {
    let (rows, cols) = (svd.u.nrows(), svd.v_t.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    for (k, &s) in svd.singular_values.iter().enumerate().take(r) {
        if s == 0.0 {
            continue;
        }
        let uk = svd.u.column(k);
        let vk = svd.v_t.row(k);
        out.ger(s, &uk, &vk.transpose(), 1.0);
    }
    out
}

/// Largest eigenvalue of a small symmetric positive semidefinite matrix
/// stored row-major as `k * k` entries.
pub fn psd_lambda_max(gram: &[f64], k: usize) -> f64 {
    match k {
        0 => 0.0,
        1 => gram[0],
        2 => {
            let (a, b, d) = (gram[0], gram[1], gram[3]);
            let half_tr = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            half_tr + disc
        }
        _ => {
            let m = DMatrix::from_row_slice(k, k, gram);
            SymmetricEigen::new(m)
                .eigenvalues
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
        }
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
