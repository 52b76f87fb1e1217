//! Standard broad learning system: regularized least-squares training and the
//! pseudoinverse-based incremental updates for new samples, new enhancement
//! nodes and new feature groups.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::broadnet::{Architecture, RandomBasis};
use crate::datasets::Task;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, hstack, spd_solve, vstack};
use crate::persist;

pub use crate::linalg::pseudoinverse;

/// Largest regularizer for which the model is treated as a pseudoinverse solution.
pub const LAMBDA_PINV_THRESHOLD: f64 = 1e-8;

/// Relative threshold below which the Greville innovation `C` counts as zero.
pub const INNOVATION_TOLERANCE: f64 = 1e-10;

/// `W = (U^T U + lambda I)^{-1} U^T Y`, solved without forming an inverse.
pub fn ridge_solve(u: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_dim("ridge_solve (rows)", u.nrows(), y.nrows())?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "regularization must be finite and non-negative, got {lambda}"
        )));
    }
    let mut gram = linalg::gram(u);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = u.transpose() * y;
    spd_solve(&gram, &rhs)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn decode_labels(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Which case of the block pseudoinverse update was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// New rows/columns lie in the span of the current state matrix (`C = 0`).
    Dependent,
    /// The innovation `C` has full rank and `B` is its pseudoinverse.
    Innovation,
    /// `C` is non-zero but rank deficient; both correction terms contribute.
    Partial,
}

/// Intermediates of one incremental pseudoinverse update.
#[derive(Debug, Clone)]
pub struct BlsUpdateWorkspace {
    pub d: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub branch: Branch,
}

/// `C^+`, `I - C C^+` style projector on the side of length `side`, and the branch.
fn innovation_pinv(c: &DMatrix<f64>, added: &DMatrix<f64>, side: usize) -> (DMatrix<f64>, usize, Branch) {
    let tol = INNOVATION_TOLERANCE * added.norm().max(1.0);
    let (c_pinv, rank) = linalg::pseudoinverse_with_rank(c, |_, _, _| tol);
    let branch = if rank == 0 {
        Branch::Dependent
    } else if rank == side {
        Branch::Innovation
    } else {
        Branch::Partial
    };
    (c_pinv, rank, branch)
}

fn plus_identity(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0;
    }
    m
}

/// Update for appended rows `U_a` (`N0 x L`). `b` is `L x N0`, with
/// `[U; U_a]^+ = [U^+ - B D, B]`.
///
/// `B = C^+ + (U^+ - C^+ D) D^T (I + P D D^T P)^{-1} P` with `P = I - C C^+`,
/// which reduces to `U^+ D^T (I + D D^T)^{-1}` for `C = 0` and to `C^+` for
/// full-rank `C`.
fn row_update(
    u: &DMatrix<f64>,
    u_pinv: &DMatrix<f64>,
    u_a: &DMatrix<f64>,
) -> Result<BlsUpdateWorkspace> {
    let d = u_a * u_pinv;
    let c = u_a - &d * u;
    let n0 = u_a.nrows();
    let (c_pinv, _, branch) = innovation_pinv(&c, u_a, n0);
    let b = if branch == Branch::Innovation {
        c_pinv
    } else {
        let p = DMatrix::identity(n0, n0) - &c * &c_pinv;
        let s = plus_identity(&p * (&d * d.transpose()) * &p);
        let mp = spd_solve(&linalg::symmetrize(s), &p)?;
        let base = u_pinv - &c_pinv * &d;
        c_pinv + base * d.transpose() * mp
    };
    Ok(BlsUpdateWorkspace { d, b, c, branch })
}

/// Update for appended columns `A` (`N x p`). `b` holds `B^T` (`p x N`), with
/// `[U, A]^+ = [U^+ - D B^T; B^T]`.
///
/// `B^T = C^+ + P (I + P D^T D P)^{-1} D^T (U^+ - D C^+)` with `P = I - C^+ C`.
fn column_update(
    u: &DMatrix<f64>,
    u_pinv: &DMatrix<f64>,
    added: &DMatrix<f64>,
) -> Result<BlsUpdateWorkspace> {
    let d = u_pinv * added;
    let c = added - u * &d;
    let p_cols = added.ncols();
    let (c_pinv, _, branch) = innovation_pinv(&c, added, p_cols);
    let b = if branch == Branch::Innovation {
        c_pinv
    } else {
        let p = DMatrix::identity(p_cols, p_cols) - &c_pinv * &c;
        let s = plus_identity(&p * (d.transpose() * &d) * &p);
        let rhs = d.transpose() * (u_pinv - &d * &c_pinv);
        &c_pinv + &p * spd_solve(&linalg::symmetrize(s), &rhs)?
    };
    Ok(BlsUpdateWorkspace { d, b, c, branch })
}

/// A trained broad learning system together with the caches its incremental
/// updates need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlsModel {
    arch: Architecture,
    basis: RandomBasis,
    lambda: f64,
    task: Task,
    #[serde(rename = "W", with = "persist::matrix")]
    weights: DMatrix<f64>,
    /// State matrix `U` of all training samples seen so far.
    #[serde(rename = "U", with = "persist::matrix")]
    state: DMatrix<f64>,
    #[serde(rename = "U_pinv", with = "persist::matrix")]
    state_pinv: DMatrix<f64>,
    #[serde(rename = "X", with = "persist::matrix")]
    inputs: DMatrix<f64>,
    #[serde(rename = "Y", with = "persist::matrix")]
    targets: DMatrix<f64>,
    /// Class names in label-index order (classification models built from named labels).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_labels: Vec<String>,
    #[serde(skip)]
    last_branch: Option<Branch>,
}

pub fn train_bls(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    arch: &Architecture,
    lambda: f64,
    seed: u64,
) -> Result<BlsModel> {
    BlsModel::train(x, y, arch, lambda, seed, Task::Regression)
}

impl BlsModel {
    /// Builds the random basis and solves for the output weights.
    ///
    /// Regularizers up to [`LAMBDA_PINV_THRESHOLD`] use `W = U^+ Y`; larger ones
    /// use the ridge solution.
    pub fn train(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        arch: &Architecture,
        lambda: f64,
        seed: u64,
        task: Task,
    ) -> Result<Self> {
        arch.validate()?;
        check_dim("train_bls (input columns)", arch.input_dim(), x.ncols())?;
        check_dim("train_bls (output columns)", arch.output_dim(), y.ncols())?;
        check_dim("train_bls (rows)", x.nrows(), y.nrows())?;
        if x.nrows() == 0 {
            return Err(Error::EmptyInput("training set"));
        }
        let basis = RandomBasis::new(arch, seed);
        let state = basis.state_matrix(x)?.into_inner();
        let state_pinv = pseudoinverse(&state);
        let weights = if lambda <= LAMBDA_PINV_THRESHOLD {
            if lambda < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "regularization must be non-negative, got {lambda}"
                )));
            }
            &state_pinv * y
        } else {
            ridge_solve(&state, y, lambda)?
        };
        Ok(Self {
            arch: arch.clone(),
            basis,
            lambda,
            task,
            weights,
            state,
            state_pinv,
            inputs: x.clone(),
            targets: y.clone(),
            class_labels: Vec::new(),
            last_branch: None,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn basis(&self) -> &RandomBasis {
        &self.basis
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn state_pinv(&self) -> &DMatrix<f64> {
        &self.state_pinv
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
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

    /// Branch taken by the most recent incremental update, if any.
    pub fn last_branch(&self) -> Option<Branch> {
        self.last_branch
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let u = self.basis.state_matrix(x)?.into_inner();
        Ok(u * &self.weights)
    }

    pub fn predict_labels(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(decode_labels(&self.predict(x)?))
    }

    fn require_pinv_regime(&self) -> Result<()> {
        if self.lambda > LAMBDA_PINV_THRESHOLD {
            Err(Error::RegularizedIncrement {
                lambda: self.lambda,
                threshold: LAMBDA_PINV_THRESHOLD,
            })
        } else {
            Ok(())
        }
    }

    /// Absorbs `N0` new samples without retraining.
    pub fn add_samples(&self, x_a: &DMatrix<f64>, y_a: &DMatrix<f64>) -> Result<BlsModel> {
        self.require_pinv_regime()?;
        check_dim("add_samples (output columns)", self.weights.ncols(), y_a.ncols())?;
        check_dim("add_samples (rows)", x_a.nrows(), y_a.nrows())?;
        if x_a.nrows() == 0 {
            return Err(Error::EmptyInput("sample increment"));
        }
        let u_a = self.basis.state_matrix(x_a)?.into_inner();
        let ws = row_update(&self.state, &self.state_pinv, &u_a)?;

        let residual = y_a - &u_a * &self.weights;
        let weights = &self.weights + &ws.b * residual;
        let top = &self.state_pinv - &ws.b * &ws.d;
        let state_pinv = hstack(&top, &ws.b)?;

        Ok(BlsModel {
            weights,
            state: vstack(&self.state, &u_a)?,
            state_pinv,
            inputs: vstack(&self.inputs, x_a)?,
            targets: vstack(&self.targets, y_a)?,
            last_branch: Some(ws.branch),
            ..self.clone()
        })
    }

    /// Inserts one group of `p` enhancement nodes.
    pub fn add_enhancement(&self, p: usize, seed: u64) -> Result<BlsModel> {
        self.require_pinv_regime()?;
        let basis = self.basis.extend_enhancement(p, seed)?;
        self.absorb_columns(basis)
    }

    /// Inserts feature group `k+1` together with its extension enhancement nodes.
    pub fn add_features(&self, seed: u64) -> Result<BlsModel> {
        self.require_pinv_regime()?;
        let basis = self.basis.extend_feature(seed);
        self.absorb_columns(basis)
    }

    fn absorb_columns(&self, basis: RandomBasis) -> Result<BlsModel> {
        let added = basis.columns_from(&self.inputs, self.basis.block_count())?;
        let ws = column_update(&self.state, &self.state_pinv, &added)?;
        let bt = &ws.b;

        let bt_y = bt * &self.targets;
        let w_top = &self.weights - &ws.d * &bt_y;
        let weights = vstack(&w_top, &bt_y)?;
        let pinv_top = &self.state_pinv - &ws.d * bt;
        let state_pinv = vstack(&pinv_top, bt)?;

        Ok(BlsModel {
            basis,
            weights,
            state: hstack(&self.state, &added)?,
            state_pinv,
            last_branch: Some(ws.branch),
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(Self::KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = persist::from_json(Self::KIND, text)?;
        model.arch.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&persist::read_file(path)?)
    }

    pub const KIND: &'static str = "bls";
}
