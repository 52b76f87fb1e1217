//! Dense linear-algebra helpers shared by the trainers.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Solves `a * x = b` for a symmetric positive (semi)definite `a`.
///
/// A Cholesky factorization is tried first; if it breaks down, a fully pivoted
/// LU solve is attempted. Numerically singular systems are reported as
/// [`Error::IllConditioned`] rather than pseudo-solved.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("spd_solve (square)", a.nrows(), a.ncols())?;
    check_dim("spd_solve (rhs rows)", a.nrows(), b.nrows())?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    if let Some(chol) = a.clone().cholesky() {
        let l = chol.l_dirty();
        let (lo, hi) = diag_extent(l.diagonal().iter().copied());
        if (lo / hi).powi(2) > singular_tolerance(n) {
            return Ok(chol.solve(b));
        }
    }
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let (lo, hi) = diag_extent(u.diagonal().iter().copied());
    if !(hi > 0.0) || lo / hi <= singular_tolerance(n) {
        return Err(Error::IllConditioned(format!(
            "{n}x{n} normal-equation matrix is numerically singular; \
             increase the regularization factor"
        )));
    }
    lu.solve(b)
        .ok_or_else(|| Error::IllConditioned(format!("{n}x{n} system could not be solved")))
}

/// Inverse of a symmetric positive definite matrix, symmetrized on return.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eye = DMatrix::identity(a.nrows(), a.ncols());
    let inv = spd_solve(a, &eye)?;
    Ok(symmetrize(inv))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Moore–Penrose pseudoinverse through the singular value decomposition.
///
/// Singular values below `max(rows, cols) * eps * sigma_max` are treated as zero.
pub fn pseudoinverse(u: &DMatrix<f64>) -> DMatrix<f64> {
    pseudoinverse_with_rank(u, |sigma_max, rows, cols| {
        rows.max(cols) as f64 * f64::EPSILON * sigma_max
    })
    .0
}

/// Pseudoinverse and numerical rank, treating singular values `<= cutoff(sigma_max, rows, cols)`
/// as zero.
pub fn pseudoinverse_with_rank(
    u: &DMatrix<f64>,
    cutoff: impl Fn(f64, usize, usize) -> f64,
) -> (DMatrix<f64>, usize) {
    let (rows, cols) = u.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = u.clone().svd(true, true);
    let cutoff = cutoff(svd.singular_values.max(), rows, cols);
    let left = svd.u.as_ref().expect("left singular vectors requested");
    let right_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let inv_sv: DVector<f64> = svd
        .singular_values
        .map(|s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 });
    let rank = inv_sv.iter().filter(|&&v| v != 0.0).count();
    // V * diag(1/s) * U^T
    let mut v_scaled = right_t.transpose();
    for (j, mut col) in v_scaled.column_iter_mut().enumerate() {
        col *= inv_sv[j];
    }
    (v_scaled * left.transpose(), rank)
}

/// `a^T * a` through the blocked matrix product.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * a
}

/// Scales row `i` of `m` by `factors[i]`.
pub fn scale_rows(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &f) in factors.iter().enumerate() {
        let mut row = out.row_mut(i);
        row *= f;
    }
    out
}

pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("vstack (columns)", top.ncols(), bottom.ncols())?;
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    Ok(out)
}

pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("hstack (rows)", left.nrows(), right.nrows())?;
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    Ok(out)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn diag_extent(diag: impl Iterator<Item = f64>) -> (f64, f64) {
    diag.map(f64::abs)
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

fn singular_tolerance(n: usize) -> f64 {
    n as f64 * f64::EPSILON
}
