#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix(r: &Rows) -> DMatrix<f64> {
    let n = r.len();
    let m = if n == 0 { 0 } else { r[0].len() };
    DMatrix::from_fn(n, m, |i, j| r[i][j])
}

pub fn transpose(a: &Rows) -> Rows {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Gauss-Jordan elimination with partial pivoting, solving `A X = B`.
pub fn gj_solve(a: &Rows, b: &Rows) -> Rows {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Rows = (0..n)
        .map(|i| a[i].iter().chain(b[i].iter()).copied().collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular system in oracle");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for i in 0..n {
            if i != col {
                let f = aug[i][col];
                if f != 0.0 {
                    for j in 0..n + m {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Minimum-norm least squares for a full-rank `U`: normal equations when
/// `N >= L`, `U^T (U U^T)^{-1} Y` otherwise.
pub fn lstsq(u: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let ur = rows(u);
    let yr = rows(y);
    let ut = transpose(&ur);
    if u.nrows() >= u.ncols() {
        matrix(&gj_solve(&matmul(&ut, &ur), &matmul(&ut, &yr)))
    } else {
        let g = matmul(&ur, &ut);
        matrix(&matmul(&ut, &gj_solve(&g, &yr)))
    }
}

/// Minimum-norm least squares for any `U`. Columns are kept greedily while
/// their residual against the kept ones is non-negligible; with `V` the kept
/// columns and `T` the coefficients of the others (`U_dep = V T`), the answer
/// is `K^T (K K^T)^{-1} w*` with `K = [I, T]` and `w* = V^+ Y`.
pub fn min_norm_lstsq(u: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let l = u.ncols();
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent: Vec<usize> = Vec::new();
    for j in 0..l {
        let col = u.column(j).into_owned();
        if kept.is_empty() {
            if col.norm() > 1e-9 * scale {
                kept.push(j);
            } else {
                dependent.push(j);
            }
            continue;
        }
        let v = u.select_columns(&kept);
        let t = lstsq(&v, &DMatrix::from_column_slice(col.len(), 1, col.as_slice()));
        let resid = (&v * &t).column(0) - &col;
        if resid.norm() > 1e-7 * scale * (u.nrows() as f64).sqrt() {
            kept.push(j);
        } else {
            dependent.push(j);
        }
    }
    let v = u.select_columns(&kept);
    let w_star = lstsq(&v, y);
    if dependent.is_empty() {
        return w_star;
    }
    let t = lstsq(&v, &u.select_columns(&dependent));
    let r = kept.len();
    // K in original column order
    let mut k = vec![vec![0.0; l]; r];
    for (a, &j) in kept.iter().enumerate() {
        k[a][j] = 1.0;
    }
    for (b, &j) in dependent.iter().enumerate() {
        for (a, row) in k.iter_mut().enumerate() {
            row[j] = t[(a, b)];
        }
    }
    let kt = transpose(&k);
    let kkt = matmul(&k, &kt);
    matrix(&matmul(&kt, &gj_solve(&kkt, &rows(&w_star))))
}

/// `(sum_i l_i u_i^T u_i + gamma I)^{-1} sum_i l_i u_i^T y_i` with scalar loops.
pub fn weighted_ridge(u: &DMatrix<f64>, y: &DMatrix<f64>, weights: &[f64], gamma: f64) -> DMatrix<f64> {
    let (n, l, c) = (u.nrows(), u.ncols(), y.ncols());
    let mut r = vec![vec![0.0; l]; l];
    let mut rhs = vec![vec![0.0; c]; l];
    for i in 0..n {
        for a in 0..l {
            for b in 0..l {
                r[a][b] += weights[i] * u[(i, a)] * u[(i, b)];
            }
            for k in 0..c {
                rhs[a][k] += weights[i] * u[(i, a)] * y[(i, k)];
            }
        }
    }
    for (a, row) in r.iter_mut().enumerate() {
        row[a] += gamma;
    }
    matrix(&gj_solve(&r, &rhs))
}

/// `exp(-||u_i W - y_i||^2 / 2 sigma^2)` with scalar loops.
pub fn kernel_weights(u: &DMatrix<f64>, w: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> Vec<f64> {
    (0..u.nrows())
        .map(|i| {
            let mut sq = 0.0;
            for c in 0..y.ncols() {
                let mut pred = 0.0;
                for j in 0..u.ncols() {
                    pred += u[(i, j)] * w[(j, c)];
                }
                sq += (pred - y[(i, c)]).powi(2);
            }
            (-sq / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Fixed-point iteration from the `gamma` ridge solution, built on the scalar oracles.
pub fn fixed_point(u: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64, gamma: f64, iters: usize) -> DMatrix<f64> {
    let mut w = weighted_ridge(u, y, &vec![1.0; u.nrows()], gamma);
    for _ in 0..iters {
        let lam = kernel_weights(u, &w, y, sigma);
        w = weighted_ridge(u, y, &lam, gamma);
    }
    w
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Smooth multi-output targets of `x`.
pub fn smooth_targets(x: &DMatrix<f64>, outputs: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), outputs, |i, c| {
        x.row(i)
            .iter()
            .enumerate()
            .map(|(j, v)| ((1 + c + j) as f64 * 0.7 * v).sin())
            .sum::<f64>()
            / x.ncols() as f64
    })
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1.0)
}

pub fn penrose_residual(u: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let up = u * p;
    let pu = p * u;
    [
        max_abs(&(&up * u - u)),
        max_abs(&(&pu * p - p)),
        max_abs(&(&up - up.transpose())),
        max_abs(&(&pu - pu.transpose())),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
