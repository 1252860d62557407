//! Small dense linear-algebra helpers over `nalgebra`.
//!
//! Public APIs in this crate pass matrices as row-major `Vec<Vec<f64>>`;
//! these helpers convert at the boundary.

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{bail, Result};
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn identity(n: usize) -> Matrix {
    from_dmatrix(&DMatrix::identity(n, n))
}

/// Numerical rank: singular values above `rel_threshold · σ_max`.
pub fn rank(rows: &[Vec<f64>], rel_threshold: f64) -> usize {
    let m = to_dmatrix(rows);
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_threshold * top).count()
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let m = to_dmatrix(a);
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        bail!(Domain, "solve: shape mismatch {}x{} vs {}", m.nrows(), m.ncols(), b.len());
    }
    match m.lu().solve(&DVector::from_column_slice(b)) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x.iter().copied().collect()),
        _ => bail!(Singular, "matrix is singular"),
    }
}

pub fn inverse(a: &[Vec<f64>]) -> Result<Matrix> {
    match to_dmatrix(a).try_inverse() {
        Some(inv) => Ok(from_dmatrix(&inv)),
        None => bail!(Singular, "matrix is singular"),
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Matrix> {
    match to_dmatrix(a).cholesky() {
        Some(c) => Ok(from_dmatrix(&c.l())),
        None => bail!(Domain, "matrix is not symmetric positive definite"),
    }
}

/// log det of a symmetric positive-definite matrix via Cholesky.
pub fn log_det_spd(a: &[Vec<f64>]) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * (0..l.len()).map(|i| libm::log(l[i][i])).sum::<f64>())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let m = to_dmatrix(a);
    let sym = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn is_symmetric(a: &[Vec<f64>], tol: f64) -> bool {
    let n = a.len();
    a.iter().all(|r| r.len() == n)
        && (0..n).all(|i| (0..i).all(|j| (a[i][j] - a[j][i]).abs() <= tol * (1.0 + a[i][j].abs())))
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| dot(r, x)).collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Matrix {
    let c = a.first().map_or(0, |r| r.len());
    (0..c).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Matrix {
    from_dmatrix(&(to_dmatrix(a) * to_dmatrix(b)))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quadratic form xᵀ A x.
pub fn quad_form(a: &[Vec<f64>], x: &[f64]) -> f64 {
    dot(x, &mat_vec(a, x))
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
