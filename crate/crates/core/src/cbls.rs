//! Correntropy-based broad learning system.
//!
//! Training runs the half-quadratic fixed-point iteration
//! `W <- (U^T Lambda U + gamma I)^{-1} U^T Lambda Y`, where `Lambda` holds the
//! per-sample weights `exp(-||u_i W - y_i||^2 / 2 sigma^2)` at the previous
//! iterate. The model keeps the weighted state and target matrices together with
//! `C_w = (U_w^T U_w + gamma I)^{-1}`, which is what the incremental updates
//! extend. Increments keep the weights of earlier samples frozen;
//! [`CblsModel::refresh_weights`] re-optimizes them over all cached data.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bls::{decode_labels, ridge_solve};
use crate::broadnet::{Architecture, RandomBasis};
use crate::correntropy::{error_weights, objective, WeightDiagonal};
use crate::datasets::Task;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{gram, hstack, pseudoinverse, scale_rows, spd_inverse, spd_solve, symmetrize, vstack};
use crate::persist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Regularization `gamma = lambda * sigma^2`.
    pub gamma: f64,
    /// Kernel size.
    pub sigma: f64,
    /// Stop once `||W(t+1) - W(t)||_F^2 < epsilon`.
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 2f64.powi(-30),
            sigma: 1.0,
            epsilon: 1e-8,
            max_iter: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel size must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// `lambda = gamma / sigma^2`, the regularizer of the objective.
    pub fn objective_lambda(&self) -> f64 {
        self.gamma / (self.sigma * self.sigma)
    }
}

/// Progress of a fixed-point run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub iterations: usize,
    pub converged: bool,
    /// `J(W(t))` for `t = 0..=iterations`.
    pub objective: Vec<f64>,
    /// `||W(t+1) - W(t)||_F^2` of the last step.
    pub last_step: f64,
}

/// Intermediates of the most recent incremental update.
#[derive(Debug, Clone)]
pub enum CblsUpdateWorkspace {
    Samples {
        lambda_alpha: WeightDiagonal,
        u_w_alpha: DMatrix<f64>,
        y_w_alpha: DMatrix<f64>,
        /// `(I + U_w^a C_w U_w^a^T)^{-1}`
        s_w_alpha: DMatrix<f64>,
    },
    Nodes {
        /// Weighted new columns (`xi_w` for enhancement nodes, `theta_w` for a feature group).
        added_w: DMatrix<f64>,
        /// `C_w U_w^T added_w`
        z_w: DMatrix<f64>,
        /// Inverse Schur complement.
        q_w: DMatrix<f64>,
    },
}

/// Weighted ridge solve `(U^T diag(l) U + gamma I)^{-1} U^T diag(l) Y`.
pub fn weighted_solve(
    u: &DMatrix<f64>,
    y: &DMatrix<f64>,
    weights: &WeightDiagonal,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let (u_w, y_w) = weigh(u, y, weights);
    solve_weighted_system(&u_w, &y_w, gamma)
}

fn weigh(u: &DMatrix<f64>, y: &DMatrix<f64>, weights: &WeightDiagonal) -> (DMatrix<f64>, DMatrix<f64>) {
    let root = weights.sqrt();
    (scale_rows(u, &root), scale_rows(y, &root))
}

fn solve_weighted_system(u_w: &DMatrix<f64>, y_w: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let mut r = gram(u_w);
    add_diagonal(&mut r, gamma);
    spd_solve(&r, &(u_w.transpose() * y_w))
}

fn add_diagonal(m: &mut DMatrix<f64>, value: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += value;
    }
}

/// One fixed-point step: weights from `w`, then the weighted ridge solve.
pub fn fixed_point_step(
    u: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &DMatrix<f64>,
    gamma: f64,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be non-negative, got {gamma}"
        )));
    }
    let weights = error_weights(u, w, y, sigma)?;
    weighted_solve(u, y, &weights, gamma)
}

struct FixedPoint {
    weights: DMatrix<f64>,
    sample_weights: WeightDiagonal,
    trace: TrainTrace,
}

/// Iterates from `w0` until the step criterion or `max_iter`.
///
/// `sample_weights` are the ones used for the final solve, so the returned
/// weights satisfy the weighted normal equations exactly for them.
fn iterate(u: &DMatrix<f64>, y: &DMatrix<f64>, w0: DMatrix<f64>, config: &TrainConfig) -> Result<FixedPoint> {
    let lambda = config.objective_lambda();
    let mut w = w0;
    let mut objective_trace = vec![objective(u, &w, y, config.sigma, lambda)?];
    let mut sample_weights = error_weights(u, &w, y, config.sigma)?;
    let mut converged = false;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    for t in 1..=config.max_iter {
        sample_weights = error_weights(u, &w, y, config.sigma)?;
        let next = weighted_solve(u, y, &sample_weights, config.gamma)?;
        last_step = (&next - &w).norm_squared();
        w = next;
        iterations = t;
        objective_trace.push(objective(u, &w, y, config.sigma, lambda)?);
        if last_step < config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(FixedPoint {
        weights: w,
        sample_weights,
        trace: TrainTrace {
            iterations,
            converged,
            objective: objective_trace,
            last_step,
        },
    })
}

/// A trained correntropy-based broad learning system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CblsModel {
    arch: Architecture,
    basis: RandomBasis,
    config: TrainConfig,
    task: Task,
    #[serde(rename = "W", with = "persist::matrix")]
    weights: DMatrix<f64>,
    /// `C_w = (U_w^T U_w + gamma I)^{-1}`.
    #[serde(rename = "C_w", with = "persist::matrix")]
    inv_autocorr: DMatrix<f64>,
    #[serde(rename = "U_w", with = "persist::matrix")]
    weighted_state: DMatrix<f64>,
    #[serde(rename = "Y_w", with = "persist::matrix")]
    weighted_targets: DMatrix<f64>,
    /// Diagonal of `Lambda_w` for every cached sample (frozen between refreshes).
    #[serde(rename = "Lambda_w")]
    sample_weights: Vec<f64>,
    #[serde(rename = "X", with = "persist::matrix")]
    inputs: DMatrix<f64>,
    #[serde(rename = "Y", with = "persist::matrix")]
    targets: DMatrix<f64>,
    trace: TrainTrace,
    /// Class names in label-index order (classification models built from named labels).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_labels: Vec<String>,
    #[serde(skip)]
    last_update: Option<CblsUpdateWorkspace>,
}

pub fn train_cbls(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<CblsModel> {
    CblsModel::train(x, y, arch, config, Task::Regression)
}

impl CblsModel {
    /// Runs the fixed-point iteration from the ridge solution with the same `gamma`.
    ///
    /// Hitting `max_iter` is not an error: the model carries the last iterate
    /// and `trace().converged == false`.
    pub fn train(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        arch: &Architecture,
        config: &TrainConfig,
        task: Task,
    ) -> Result<Self> {
        arch.validate()?;
        config.validate()?;
        check_dim("train_cbls (input columns)", arch.input_dim(), x.ncols())?;
        check_dim("train_cbls (output columns)", arch.output_dim(), y.ncols())?;
        check_dim("train_cbls (rows)", x.nrows(), y.nrows())?;
        if x.nrows() == 0 {
            return Err(Error::EmptyInput("training set"));
        }
        let basis = RandomBasis::new(arch, config.seed);
        let u = basis.state_matrix(x)?.into_inner();
        let w0 = ridge_solve(&u, y, config.gamma)?;
        let fp = iterate(&u, y, w0, config)?;
        Self::assemble(arch.clone(), basis, *config, task, &u, x.clone(), y.clone(), fp)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        arch: Architecture,
        basis: RandomBasis,
        config: TrainConfig,
        task: Task,
        u: &DMatrix<f64>,
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        fp: FixedPoint,
    ) -> Result<Self> {
        let (weighted_state, weighted_targets) = weigh(u, &targets, &fp.sample_weights);
        let mut r = gram(&weighted_state);
        add_diagonal(&mut r, config.gamma);
        let inv_autocorr = spd_inverse(&r)?;
        Ok(Self {
            arch,
            basis,
            config,
            task,
            weights: fp.weights,
            inv_autocorr,
            weighted_state,
            weighted_targets,
            sample_weights: fp.sample_weights.into_entries().iter().copied().collect(),
            inputs,
            targets,
            trace: fp.trace,
            class_labels: Vec::new(),
            last_update: None,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn basis(&self) -> &RandomBasis {
        &self.basis
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn set_class_labels(&mut self, labels: Vec<String>) {
        self.class_labels = labels;
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `C_w`, the inverse weighted autocorrelation matrix.
    pub fn inv_autocorr(&self) -> &DMatrix<f64> {
        &self.inv_autocorr
    }

    pub fn weighted_state(&self) -> &DMatrix<f64> {
        &self.weighted_state
    }

    pub fn weighted_targets(&self) -> &DMatrix<f64> {
        &self.weighted_targets
    }

    pub fn sample_weights(&self) -> &[f64] {
        &self.sample_weights
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    pub fn last_update(&self) -> Option<&CblsUpdateWorkspace> {
        self.last_update.as_ref()
    }

    /// `R_w = U_w^T U_w + gamma I` rebuilt from the cached weighted state.
    pub fn autocorrelation(&self) -> DMatrix<f64> {
        let mut r = gram(&self.weighted_state);
        add_diagonal(&mut r, self.config.gamma);
        r
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let u = self.basis.state_matrix(x)?.into_inner();
        Ok(u * &self.weights)
    }

    pub fn predict_labels(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(decode_labels(&self.predict(x)?))
    }

    /// Objective `J` of the current weights over every cached sample.
    pub fn objective(&self) -> Result<f64> {
        let u = self.basis.state_matrix(&self.inputs)?.into_inner();
        objective(
            &u,
            &self.weights,
            &self.targets,
            self.config.sigma,
            self.config.objective_lambda(),
        )
    }

    /// Absorbs `N0` new samples with the matrix inversion lemma.
    ///
    /// New samples are weighted with the weights held on entry; earlier
    /// sample weights stay frozen.
    pub fn add_samples(&self, x_a: &DMatrix<f64>, y_a: &DMatrix<f64>) -> Result<CblsModel> {
        check_dim("add_samples (output columns)", self.weights.ncols(), y_a.ncols())?;
        check_dim("add_samples (rows)", x_a.nrows(), y_a.nrows())?;
        if x_a.nrows() == 0 {
            return Err(Error::EmptyInput("sample increment"));
        }
        let u_a = self.basis.state_matrix(x_a)?.into_inner();
        let lambda_alpha = error_weights(&u_a, &self.weights, y_a, self.config.sigma)?;
        let (u_w_alpha, y_w_alpha) = weigh(&u_a, y_a, &lambda_alpha);

        // M = C_w U_w^a^T, so U_w^a C_w = M^T by symmetry
        let m = &self.inv_autocorr * u_w_alpha.transpose();
        let mut s_inv = &u_w_alpha * &m;
        add_diagonal(&mut s_inv, 1.0);
        let s_w_alpha = spd_inverse(&symmetrize(s_inv))?;
        let gain = &m * &s_w_alpha;

        let innovation = &y_w_alpha - &u_w_alpha * &self.weights;
        let weights = &self.weights + &gain * innovation;
        let inv_autocorr = symmetrize(&self.inv_autocorr - &gain * m.transpose());

        let mut sample_weights = self.sample_weights.clone();
        sample_weights.extend(lambda_alpha.entries().iter());

        Ok(CblsModel {
            weights,
            inv_autocorr,
            weighted_state: vstack(&self.weighted_state, &u_w_alpha)?,
            weighted_targets: vstack(&self.weighted_targets, &y_w_alpha)?,
            sample_weights,
            inputs: vstack(&self.inputs, x_a)?,
            targets: vstack(&self.targets, y_a)?,
            last_update: Some(CblsUpdateWorkspace::Samples {
                lambda_alpha,
                u_w_alpha,
                y_w_alpha,
                s_w_alpha,
            }),
            ..self.clone()
        })
    }

    /// Inserts one group of `p` enhancement nodes with the block inversion lemma.
    pub fn add_enhancement(&self, p: usize, seed: u64) -> Result<CblsModel> {
        let basis = self.basis.extend_enhancement(p, seed)?;
        self.absorb_columns(basis)
    }

    /// Inserts feature group `k+1` and its extension enhancement nodes.
    pub fn add_features(&self, seed: u64) -> Result<CblsModel> {
        let basis = self.basis.extend_feature(seed);
        self.absorb_columns(basis)
    }

    fn absorb_columns(&self, basis: RandomBasis) -> Result<CblsModel> {
        let added = basis.columns_from(&self.inputs, self.basis.block_count())?;
        let root: Vec<f64> = self.sample_weights.iter().map(|w| w.sqrt()).collect();
        let added_w = scale_rows(&added, &root);

        let cross = self.weighted_state.transpose() * &added_w;
        let z_w = &self.inv_autocorr * &cross;
        // gamma I + xi^T xi - xi^T U_w Z_w, written as E^T E + gamma (I + Z^T Z)
        // with E = xi - U_w Z_w
        let e = &added_w - &self.weighted_state * &z_w;
        let mut z_gram = gram(&z_w);
        add_diagonal(&mut z_gram, 1.0);
        let schur = gram(&e) + z_gram * self.config.gamma;
        let q_w = spd_inverse(&symmetrize(schur)).map_err(|e| match e {
            Error::IllConditioned(msg) => Error::IllConditioned(format!(
                "{msg}; the new nodes are (nearly) dependent on existing ones, \
                 a positive gamma keeps the Schur complement invertible"
            )),
            other => other,
        })?;

        let residual = &self.weighted_targets - &self.weighted_state * &self.weights;
        let g = &q_w * (added_w.transpose() * residual);
        let w_top = &self.weights - &z_w * &g;
        let weights = vstack(&w_top, &g)?;

        let zq = &z_w * &q_w;
        let top_left = &self.inv_autocorr + &zq * z_w.transpose();
        let top = hstack(&top_left, &(-&zq))?;
        let bottom = hstack(&(-zq.transpose()), &q_w)?;
        let inv_autocorr = symmetrize(vstack(&top, &bottom)?);

        Ok(CblsModel {
            basis,
            weights,
            inv_autocorr,
            weighted_state: hstack(&self.weighted_state, &added_w)?,
            last_update: Some(CblsUpdateWorkspace::Nodes { added_w, z_w, q_w }),
            ..self.clone()
        })
    }

    /// Re-runs the fixed-point iteration from the current weights over every
    /// cached sample, replacing the frozen sample weights.
    pub fn refresh_weights(&self) -> Result<CblsModel> {
        let u = self.basis.state_matrix(&self.inputs)?.into_inner();
        let fp = iterate(&u, &self.targets, self.weights.clone(), &self.config)?;
        Self::assemble(
            self.arch.clone(),
            self.basis.clone(),
            self.config,
            self.task,
            &u,
            self.inputs.clone(),
            self.targets.clone(),
            fp,
        )
        .map(|mut m| {
            m.class_labels = self.class_labels.clone();
            m
        })
    }

    /// Direct solve over the cached samples with the current (frozen) sample
    /// weights; what every incremental update should reproduce.
    ///
    /// Solved as the least-squares problem `[U_w; sqrt(gamma) I] W = [Y_w; 0]`
    /// through an SVD rather than through the normal equations.
    pub fn frozen_batch_weights(&self) -> Result<DMatrix<f64>> {
        let u = self.basis.state_matrix(&self.inputs)?.into_inner();
        let root: Vec<f64> = self.sample_weights.iter().map(|w| w.sqrt()).collect();
        let u_w = scale_rows(&u, &root);
        let y_w = scale_rows(&self.targets, &root);
        let (n, l) = u_w.shape();
        let mut a = DMatrix::zeros(n + l, l);
        a.rows_mut(0, n).copy_from(&u_w);
        for i in 0..l {
            a[(n + i, i)] = self.config.gamma.sqrt();
        }
        let mut b = DMatrix::zeros(n + l, y_w.ncols());
        b.rows_mut(0, n).copy_from(&y_w);
        Ok(pseudoinverse(&a) * b)
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(Self::KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = persist::from_json(Self::KIND, text)?;
        model.arch.validate()?;
        model.config.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&persist::read_file(path)?)
    }

    pub const KIND: &'static str = "cbls";
}
