//! Metrics, Monte-Carlo runs, grid search, increment studies and reports.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bls::{decode_labels, BlsModel};
use crate::broadnet::Architecture;
use crate::cbls::{CblsModel, TrainConfig};
use crate::datasets::{
    add_input_noise, add_target_noise, alpha_stable_noise, flip_labels, gaussian_noise,
    inject_target_outliers, Dataset, Task,
};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{max_abs, pseudoinverse};

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_dim("rmse", target.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("rmse"));
    }
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Percentage of matching labels.
pub fn accuracy(pred: &[usize], target: &[usize]) -> Result<f64> {
    check_dim("accuracy", target.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let hits = pred.iter().zip(target).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// RMSE for regression, accuracy in percent for classification.
pub fn score(task: Task, pred: &DMatrix<f64>, ds: &Dataset) -> Result<f64> {
    match task {
        Task::Regression => rmse(pred.as_slice(), ds.y.as_slice()),
        Task::Classification => {
            let truth = match &ds.labels {
                Some(l) => l.clone(),
                None => decode_labels(&ds.y),
            };
            accuracy(&decode_labels(pred), &truth)
        }
    }
}

/// Child seed `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bls,
    Cbls,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Bls => "bls",
            ModelKind::Cbls => "cbls",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSite {
    Targets,
    Inputs,
}

/// Corruption applied to the training split of every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contamination {
    None,
    /// Adds `U[lo, hi]` to the targets of a fraction `p` of the rows.
    TargetOutliers { p: f64, lo: f64, hi: f64 },
    LabelFlip { p: f64 },
    AlphaStable { alpha: f64, gamma: f64, site: NoiseSite },
    Gaussian { variance: f64, site: NoiseSite },
}

impl Contamination {
    pub fn apply(&self, ds: &Dataset, seed: u64) -> Result<Dataset> {
        match *self {
            Contamination::None => Ok(ds.clone()),
            Contamination::TargetOutliers { p, lo, hi } => inject_target_outliers(ds, p, lo, hi, seed),
            Contamination::LabelFlip { p } => flip_labels(ds, p, seed),
            Contamination::AlphaStable { alpha, gamma, site } => {
                add_noise(ds, &alpha_stable_noise(ds.len(), alpha, gamma, seed)?, site)
            }
            Contamination::Gaussian { variance, site } => {
                add_noise(ds, &gaussian_noise(ds.len(), variance, seed)?, site)
            }
        }
    }

    /// Same corruption at a different fraction; noise kinds are unchanged.
    pub fn with_fraction(self, p: f64) -> Self {
        match self {
            Contamination::TargetOutliers { lo, hi, .. } => Contamination::TargetOutliers { p, lo, hi },
            Contamination::LabelFlip { .. } => Contamination::LabelFlip { p },
            other => other,
        }
    }
}

fn add_noise(ds: &Dataset, noise: &[f64], site: NoiseSite) -> Result<Dataset> {
    match site {
        NoiseSite::Targets => add_target_noise(ds, noise),
        NoiseSite::Inputs => add_input_noise(ds, noise),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Score cells on a held-out part of the clean training data.
    Validation,
    /// Score cells on the test set.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub task: Task,
    /// Nodes per feature group.
    pub nf: Vec<usize>,
    /// Feature groups.
    pub nw: Vec<usize>,
    /// Enhancement nodes.
    pub ne: Vec<usize>,
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub runs: usize,
    pub contamination: Contamination,
    pub seed: u64,
    pub selection: Selection,
    pub validation_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Cbls,
            task: Task::Regression,
            nf: (1..=20).step_by(2).collect(),
            nw: (1..=20).collect(),
            ne: (1..=200).step_by(5).collect(),
            gammas: vec![2f64.powi(-30)],
            sigmas: (-5..=5).map(|e| 2f64.powi(e)).collect(),
            epsilon: 1e-8,
            max_iter: 50,
            runs: 20,
            contamination: Contamination::None,
            seed: 0,
            selection: Selection::Validation,
            validation_fraction: 0.2,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("nf", self.nf.is_empty()),
            ("nw", self.nw.is_empty()),
            ("ne", self.ne.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("sigmas", self.sigmas.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidParameter(format!("grid {name} is empty")));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Every grid cell in canonical order.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut out = Vec::new();
        for &nf in &self.nf {
            for &nw in &self.nw {
                for &ne in &self.ne {
                    for &gamma in &self.gammas {
                        for (sigma_index, &sigma) in self.sigmas.iter().enumerate() {
                            out.push(CellParams {
                                nf,
                                nw,
                                ne,
                                gamma,
                                sigma,
                                sigma_index,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One point of the hyper-parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub nf: usize,
    pub nw: usize,
    pub ne: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub sigma_index: usize,
}

impl CellParams {
    pub fn width(&self) -> usize {
        self.nf * self.nw + self.ne
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Result<Architecture> {
        Architecture::new(input_dim, output_dim, self.nw, self.nf, 1, self.ne)
    }

    pub fn train_config(&self, expt: &ExperimentConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            sigma: self.sigma,
            epsilon: expt.epsilon,
            max_iter: expt.max_iter,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Bls(BlsModel),
    Cbls(CblsModel),
}

impl Fitted {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Fitted::Bls(m) => m.predict(x),
            Fitted::Cbls(m) => m.predict(x),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        match self {
            Fitted::Bls(m) => m.weights(),
            Fitted::Cbls(m) => m.weights(),
        }
    }
}

pub fn fit(expt: &ExperimentConfig, cell: &CellParams, train: &Dataset, seed: u64) -> Result<Fitted> {
    let arch = cell.architecture(train.x.ncols(), train.y.ncols())?;
    match expt.model {
        ModelKind::Bls => BlsModel::train(&train.x, &train.y, &arch, cell.gamma, seed, expt.task).map(Fitted::Bls),
        ModelKind::Cbls => {
            let config = cell.train_config(expt, seed);
            CblsModel::train(&train.x, &train.y, &arch, &config, expt.task).map(Fitted::Cbls)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_ms: f64,
    pub train_metric: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Monte-Carlo summary of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: CellParams,
    pub per_run: Vec<RunRecord>,
    pub mean: Metrics,
    pub std: Metrics,
    pub median_test: f64,
    pub failures: usize,
}

impl CellReport {
    pub fn test_metrics(&self) -> Vec<f64> {
        self.per_run.iter().filter_map(|r| r.metrics.map(|m| m.test_metric)).collect()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn run_once(
    expt: &ExperimentConfig,
    cell: &CellParams,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<Metrics> {
    let corrupted = expt.contamination.apply(train, derive_seed(seed, 1))?;
    let start = Instant::now();
    let model = fit(expt, cell, &corrupted, derive_seed(seed, 0))?;
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Metrics {
        train_ms,
        train_metric: score(expt.task, &model.predict(&corrupted.x)?, &corrupted)?,
        test_metric: score(expt.task, &model.predict(&test.x)?, test)?,
    })
}

/// `runs` independent repetitions of one cell; each run draws a fresh basis and
/// a fresh contamination of `train`.
pub fn monte_carlo(
    expt: &ExperimentConfig,
    cell: &CellParams,
    train: &Dataset,
    test: &Dataset,
    runs: usize,
    seed: u64,
) -> Result<CellReport> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let per_run: Vec<RunRecord> = (0..runs)
        .map(|run| {
            let run_seed = derive_seed(seed, run as u64);
            match run_once(expt, cell, train, test, run_seed) {
                Ok(m) => RunRecord {
                    run,
                    seed: run_seed,
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => RunRecord {
                    run,
                    seed: run_seed,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<Metrics> = per_run.iter().filter_map(|r| r.metrics).collect();
    let column = |f: fn(&Metrics) -> f64| mean_std(&ok.iter().map(f).collect::<Vec<_>>());
    let (ms_mean, ms_std) = column(|m| m.train_ms);
    let (tr_mean, tr_std) = column(|m| m.train_metric);
    let (te_mean, te_std) = column(|m| m.test_metric);
    let tests: Vec<f64> = ok.iter().map(|m| m.test_metric).collect();
    Ok(CellReport {
        cell: *cell,
        failures: runs - ok.len(),
        median_test: median(&tests),
        per_run,
        mean: Metrics {
            train_ms: ms_mean,
            train_metric: tr_mean,
            test_metric: te_mean,
        },
        std: Metrics {
            train_ms: ms_std,
            train_metric: tr_std,
            test_metric: te_std,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Validation score of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub cell: CellParams,
    pub mean: f64,
    pub std: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub best: CellParams,
    /// Runs of the best cell on the test set.
    pub per_run: Vec<RunRecord>,
    pub mean: Metrics,
    pub std: Metrics,
    pub median_test: f64,
    pub failures: usize,
    pub grid: Vec<CellScore>,
    pub environment: Environment,
    pub wall_ms: f64,
}

impl Report {
    /// Zeroes every timing field.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        r.mean.train_ms = 0.0;
        r.std.train_ms = 0.0;
        for run in &mut r.per_run {
            if let Some(m) = &mut run.metrics {
                m.train_ms = 0.0;
            }
        }
        r
    }

    pub fn test_metrics(&self) -> Vec<f64> {
        self.per_run.iter().filter_map(|r| r.metrics.map(|m| m.test_metric)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One row per grid cell.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["nf", "nw", "ne", "gamma", "sigma", "score_mean", "score_std", "failures"])
            .map_err(|e| csv_error(path, e))?;
        for s in &self.grid {
            w.write_record([
                s.cell.nf.to_string(),
                s.cell.nw.to_string(),
                s.cell.ne.to_string(),
                s.cell.gamma.to_string(),
                s.cell.sigma.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
                s.failures.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Seeded split of `train` into a fitting part and a clean validation part.
pub fn validation_split(train: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = train.len();
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {fraction} leaves an empty split of {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, fit) = order.split_at(n_val);
    let mut fit = fit.to_vec();
    let mut val = val.to_vec();
    fit.sort_unstable();
    val.sort_unstable();
    Ok((train.select(&fit), train.select(&val)))
}

fn better(a: &CellScore, b: &CellScore, task: Task) -> bool {
    let key = |s: &CellScore| {
        let bad = if s.failures > 0 || s.mean.is_nan() {
            f64::INFINITY
        } else {
            match task {
                Task::Regression => s.mean,
                Task::Classification => -s.mean,
            }
        };
        (bad, s.cell.width(), s.cell.sigma_index)
    };
    let (ka, kb) = (key(a), key(b));
    match ka.0.total_cmp(&kb.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (ka.1, ka.2) < (kb.1, kb.2),
    }
}

/// Exhaustive search over the grid, then `runs` test-set repetitions of the winner.
///
/// Every cell is scored on the same sequence of run seeds, so cells differ only
/// in their hyper-parameters.
/// Ties on the mean score go to the smaller network, then the smaller kernel-size index.
pub fn grid_search(expt: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Report> {
    expt.validate()?;
    let start = Instant::now();
    let (fit_set, score_set) = match expt.selection {
        Selection::Validation => {
            validation_split(train, expt.validation_fraction, derive_seed(expt.seed, u64::MAX))?
        }
        Selection::Test => (train.clone(), test.clone()),
    };
    let cells = expt.cells();
    let mut grid = Vec::with_capacity(cells.len());
    let grid_seed = derive_seed(expt.seed, 1);
    for cell in &cells {
        let rep = monte_carlo(expt, cell, &fit_set, &score_set, expt.runs, grid_seed)?;
        grid.push(CellScore {
            cell: *cell,
            mean: rep.mean.test_metric,
            std: rep.std.test_metric,
            failures: rep.failures,
        });
    }
    let mut best = &grid[0];
    for s in &grid[1..] {
        if better(s, best, expt.task) {
            best = s;
        }
    }
    let best = best.cell;
    let final_rep = monte_carlo(expt, &best, train, test, expt.runs, expt.seed)?;
    Ok(Report {
        config: expt.clone(),
        best,
        per_run: final_rep.per_run,
        mean: final_rep.mean,
        std: final_rep.std,
        median_test: final_rep.median_test,
        failures: final_rep.failures,
        grid,
        environment: Environment::current(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One row of a contamination sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p: f64,
    pub model: ModelKind,
    pub best: CellParams,
    pub mean_test: f64,
    pub std_test: f64,
    pub median_test: f64,
}

/// Grid search per contamination level and model.
pub fn contamination_sweep(
    experiments: &[ExperimentConfig],
    p_list: &[f64],
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &p in p_list {
        for expt in experiments {
            let mut e = expt.clone();
            e.contamination = e.contamination.with_fraction(p);
            let r = grid_search(&e, train, test)?;
            out.push(SweepPoint {
                p,
                model: e.model,
                best: r.best,
                mean_test: r.mean.test_metric,
                std_test: r.std.test_metric,
                median_test: r.median_test,
            });
        }
    }
    Ok(out)
}

/// Fig.-2 style curve: one row per `p`, mean/std/median test metric per model.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut models: Vec<ModelKind> = Vec::new();
    for pt in points {
        if !models.contains(&pt.model) {
            models.push(pt.model);
        }
    }
    let mut ps: Vec<f64> = Vec::new();
    for pt in points {
        if !ps.contains(&pt.p) {
            ps.push(pt.p);
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["p".to_string()];
    for m in &models {
        header.extend(["mean", "std", "median"].iter().map(|s| format!("{m}_{s}")));
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for p in ps {
        let mut row = vec![p.to_string()];
        for m in &models {
            match points.iter().find(|pt| pt.p == p && pt.model == *m) {
                Some(pt) => row.extend([pt.mean_test, pt.std_test, pt.median_test].iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "count", rename_all = "lowercase")]
pub enum IncrementStep {
    Samples(usize),
    Enhancement(usize),
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementStudy {
    pub model: ModelKind,
    pub task: Task,
    pub cell: CellParams,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Rows of the training set used for the initial fit; sample steps consume the rest in order.
    pub initial_samples: usize,
    pub schedule: Vec<IncrementStep>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `None` for the initial fit.
    pub increment: Option<IncrementStep>,
    pub samples: usize,
    pub width: usize,
    pub ms: f64,
    pub train_metric: f64,
    pub test_metric: f64,
    /// Max-abs gap to the batch solution over the same data (frozen sample
    /// weights for the correntropy model).
    pub oracle_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub study: IncrementStudy,
    pub steps: Vec<StepRecord>,
    pub environment: Environment,
}

fn oracle_diff(model: &Fitted) -> Result<f64> {
    match model {
        Fitted::Bls(m) => Ok(max_abs(&(m.weights() - pseudoinverse(m.state()) * m.targets()))),
        Fitted::Cbls(m) => Ok(max_abs(&(m.weights() - m.frozen_batch_weights()?))),
    }
}

fn apply_step(model: &Fitted, step: IncrementStep, x: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> Result<Fitted> {
    Ok(match (model, step) {
        (Fitted::Bls(m), IncrementStep::Samples(_)) => Fitted::Bls(m.add_samples(x, y)?),
        (Fitted::Bls(m), IncrementStep::Enhancement(p)) => Fitted::Bls(m.add_enhancement(p, seed)?),
        (Fitted::Bls(m), IncrementStep::Features) => Fitted::Bls(m.add_features(seed)?),
        (Fitted::Cbls(m), IncrementStep::Samples(_)) => Fitted::Cbls(m.add_samples(x, y)?),
        (Fitted::Cbls(m), IncrementStep::Enhancement(p)) => Fitted::Cbls(m.add_enhancement(p, seed)?),
        (Fitted::Cbls(m), IncrementStep::Features) => Fitted::Cbls(m.add_features(seed)?),
    })
}

fn fitted_samples(model: &Fitted) -> usize {
    match model {
        Fitted::Bls(m) => m.inputs().nrows(),
        Fitted::Cbls(m) => m.inputs().nrows(),
    }
}

fn fitted_width(model: &Fitted) -> usize {
    model.weights().nrows()
}

/// Initial fit followed by the scheduled increments, timing and checking each step.
pub fn run_increment_study(study: &IncrementStudy, train: &Dataset, test: &Dataset) -> Result<IncrementReport> {
    let needed = study.initial_samples
        + study
            .schedule
            .iter()
            .map(|s| if let IncrementStep::Samples(n) = s { *n } else { 0 })
            .sum::<usize>();
    if needed > train.len() {
        return Err(Error::InvalidParameter(format!(
            "schedule needs {needed} training rows, only {} available",
            train.len()
        )));
    }
    let expt = ExperimentConfig {
        model: study.model,
        task: study.task,
        epsilon: study.epsilon,
        max_iter: study.max_iter,
        seed: study.seed,
        ..ExperimentConfig::default()
    };
    let seen = |n: usize| train.select(&(0..n).collect::<Vec<_>>());
    let record = |step: usize, increment, model: &Fitted, ms: f64| -> Result<StepRecord> {
        let data = seen(fitted_samples(model));
        Ok(StepRecord {
            step,
            increment,
            samples: fitted_samples(model),
            width: fitted_width(model),
            ms,
            train_metric: score(study.task, &model.predict(&data.x)?, &data)?,
            test_metric: score(study.task, &model.predict(&test.x)?, test)?,
            oracle_diff: oracle_diff(model)?,
        })
    };

    let initial = seen(study.initial_samples);
    let start = Instant::now();
    let mut model = fit(&expt, &study.cell, &initial, study.seed)?;
    let mut steps = vec![record(0, None, &model, start.elapsed().as_secs_f64() * 1e3)?];
    let mut cursor = study.initial_samples;
    for (i, &step) in study.schedule.iter().enumerate() {
        let (x, y) = match step {
            IncrementStep::Samples(n) => {
                let rows: Vec<usize> = (cursor..cursor + n).collect();
                cursor += n;
                (train.x.select_rows(&rows), train.y.select_rows(&rows))
            }
            _ => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
        };
        let start = Instant::now();
        model = apply_step(&model, step, &x, &y, derive_seed(study.seed, i as u64 + 1))?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        steps.push(record(i + 1, Some(step), &model, ms)?);
    }
    Ok(IncrementReport {
        study: study.clone(),
        steps,
        environment: Environment::current(),
    })
}
