//! Correntropy kernel and estimator, the per-sample error weights of the
//! correntropy objective, and the objective with its gradient.
//!
//! Two kernels live here and must not be confused: the estimator uses the
//! normalized Gaussian `exp(-d^2 / 2 sigma^2) / (sqrt(2 pi) sigma)`, while the
//! training objective and its weights use the bare exponential.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Exponents below this clamp the weight to exactly zero.
const EXPONENT_FLOOR: f64 = -700.0;

/// Gaussian kernel size `sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self { sigma })
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel size must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }
}

/// Diagonal of the error-weight matrix, one entry per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagonal {
    entries: DVector<f64>,
}

impl WeightDiagonal {
    pub fn from_entries(entries: DVector<f64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DVector<f64> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Element-wise square roots, used to weight rows of `U` and `Y`.
    pub fn sqrt(&self) -> Vec<f64> {
        self.entries.iter().map(|w| w.sqrt()).collect()
    }
}

fn kernel_exponent(sq_dist: f64, sigma: f64) -> f64 {
    -sq_dist / (2.0 * sigma * sigma)
}

fn bare_weight(sq_dist: f64, sigma: f64) -> f64 {
    let e = kernel_exponent(sq_dist, sigma);
    if e < EXPONENT_FLOOR {
        0.0
    } else {
        e.exp()
    }
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    let sigma = KernelParams::new(sigma)?.sigma();
    check_dim("gaussian_kernel (lengths)", x.len(), y.len())?;
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(kernel_exponent(sq, sigma).exp() / ((2.0 * PI).sqrt() * sigma))
}

/// Sample mean of the normalized kernel over paired rows of `xs` and `ys`.
pub fn correntropy_estimate(xs: &DMatrix<f64>, ys: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    KernelParams::new(sigma)?;
    check_dim("correntropy_estimate (rows)", xs.nrows(), ys.nrows())?;
    check_dim("correntropy_estimate (columns)", xs.ncols(), ys.ncols())?;
    if xs.nrows() == 0 {
        return Err(Error::EmptyInput("correntropy estimate needs at least one pair"));
    }
    let n = xs.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let a: Vec<f64> = xs.row(i).iter().copied().collect();
        let b: Vec<f64> = ys.row(i).iter().copied().collect();
        total += gaussian_kernel(&a, &b, sigma)?;
    }
    Ok(total / n as f64)
}

fn check_shapes(u: &DMatrix<f64>, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    check_dim("correntropy (U columns vs W rows)", u.ncols(), w.nrows())?;
    check_dim("correntropy (U rows vs Y rows)", u.nrows(), y.nrows())?;
    check_dim("correntropy (W columns vs Y columns)", w.ncols(), y.ncols())
}

fn row_sq_errors(u: &DMatrix<f64>, w: &DMatrix<f64>, y: &DMatrix<f64>) -> DVector<f64> {
    let e = u * w - y;
    DVector::from_iterator(e.nrows(), e.row_iter().map(|r| r.norm_squared()))
}

/// `exp(-||u_i W - y_i||^2 / (2 sigma^2))` for every sample.
pub fn error_weights(
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: f64,
) -> Result<WeightDiagonal> {
    let sigma = KernelParams::new(sigma)?.sigma();
    check_shapes(u, w, y)?;
    let entries = row_sq_errors(u, w, y).map(|sq| bare_weight(sq, sigma));
    Ok(WeightDiagonal { entries })
}

/// `J(W) = sum_i exp(-||u_i W - y_i||^2 / 2 sigma^2) - (lambda / 2) ||W||_F^2`.
pub fn objective(
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    let weights = error_weights(u, w, y, sigma)?;
    Ok(weights.entries.sum() - 0.5 * lambda * w.norm_squared())
}

/// `dJ/dW = -(1/sigma^2) U^T Lambda (U W - Y) - lambda W`.
pub fn objective_gradient(
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: f64,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let weights = error_weights(u, w, y, sigma)?;
    let mut residual = u * w - y;
    for (i, lam) in weights.entries.iter().enumerate() {
        let mut row = residual.row_mut(i);
        row *= *lam;
    }
    Ok(u.transpose() * residual * (-1.0 / (sigma * sigma)) - w * lambda)
}

/// `J(W) / N`.
pub fn normalized_objective(
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    if u.nrows() == 0 {
        return Err(Error::EmptyInput("normalized objective needs at least one sample"));
    }
    Ok(objective(u, w, y, sigma, lambda)? / u.nrows() as f64)
}
