//! Data ingestion, normalization, contamination and synthetic series.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::persist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

/// Observed min/max of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self { min, max }
    }

    fn is_degenerate(&self) -> bool {
        !(self.max > self.min)
    }

    fn forward(&self, v: f64, (lo, hi): (f64, f64)) -> f64 {
        if self.is_degenerate() {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * (v - self.min) / (self.max - self.min)
        }
    }

    fn inverse(&self, v: f64, (lo, hi): (f64, f64)) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + (self.max - self.min) * (v - lo) / (hi - lo)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Inputs and targets to `[0, 1]`.
    RegressionUnit,
    /// Inputs only, to `[-1, 1]`.
    ClassificationSym,
}

impl NormMode {
    fn interval(self) -> (f64, f64) {
        match self {
            NormMode::RegressionUnit => (0.0, 1.0),
            NormMode::ClassificationSym => (-1.0, 1.0),
        }
    }

    fn scales_targets(self) -> bool {
        self == NormMode::RegressionUnit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "persist::matrix")]
    pub x: DMatrix<f64>,
    /// Targets, or one-hot codes for classification.
    #[serde(with = "persist::matrix")]
    pub y: DMatrix<f64>,
    pub task: Task,
    /// Class indices per row (classification only).
    pub labels: Option<Vec<usize>>,
    /// Original label names in index order.
    pub class_labels: Vec<String>,
    pub feature_ranges: Vec<ColumnRange>,
    pub target_ranges: Vec<ColumnRange>,
    /// Set once the data has been normalized with the recorded ranges.
    pub normalization: Option<NormMode>,
}

fn column_ranges(m: &DMatrix<f64>) -> Vec<ColumnRange> {
    m.column_iter().map(|c| ColumnRange::of(c.iter().copied())).collect()
}

impl Dataset {
    pub fn regression(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        check_dim("dataset rows", x.nrows(), y.nrows())?;
        Ok(Self {
            feature_ranges: column_ranges(&x),
            target_ranges: column_ranges(&y),
            x,
            y,
            task: Task::Regression,
            labels: None,
            class_labels: Vec::new(),
            normalization: None,
        })
    }

    pub fn classification(x: DMatrix<f64>, labels: Vec<usize>, class_labels: Vec<String>) -> Result<Self> {
        check_dim("dataset rows", x.nrows(), labels.len())?;
        let y = one_hot(&labels, class_labels.len())?;
        Ok(Self {
            feature_ranges: column_ranges(&x),
            target_ranges: column_ranges(&y),
            x,
            y,
            task: Task::Classification,
            labels: Some(labels),
            class_labels,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Rows in the given order; metadata is carried over unchanged.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.x = self.x.select_rows(rows);
        out.y = self.y.select_rows(rows);
        out.labels = self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect());
        out
    }

    /// First `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n > self.len() {
            return Err(Error::InvalidParameter(format!(
                "split point {n} exceeds {} rows",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.select(&head), self.select(&tail)))
    }

    /// Re-indexes the labels to follow `class_labels`, e.g. a test file against
    /// the training order.
    pub fn relabel(&self, class_labels: &[String]) -> Result<Dataset> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::UnsupportedTask("relabeling needs class labels".into()))?;
        let mapped = labels
            .iter()
            .map(|&l| {
                let name = &self.class_labels[l];
                class_labels.iter().position(|c| c == name).ok_or_else(|| {
                    Error::InvalidParameter(format!("label {name:?} is not one of the model's classes"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Dataset::classification(self.x.clone(), mapped, class_labels.to_vec())?;
        out.feature_ranges = self.feature_ranges.clone();
        out.normalization = self.normalization;
        Ok(out)
    }

    /// Maps normalized targets back to the original scale.
    pub fn denormalize_targets(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.normalization {
            Some(mode) if mode.scales_targets() => {
                check_dim("target columns", self.target_ranges.len(), y.ncols())?;
                let iv = mode.interval();
                Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
                    self.target_ranges[j].inverse(y[(i, j)], iv)
                }))
            }
            _ => Ok(y.clone()),
        }
    }
}

/// Where the targets live in a CSV file. Negative indices count from the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvSchema {
    TargetColumns(Vec<isize>),
    LabelColumn(isize),
}

fn resolve_column(index: isize, width: usize) -> Option<usize> {
    let resolved = if index < 0 { width as isize + index } else { index };
    (0..width as isize).contains(&resolved).then_some(resolved as usize)
}

pub fn load_csv(path: &Path, schema: &CsvSchema, has_header: bool) -> Result<Dataset> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(record);
    }
    if rows.is_empty() {
        return Err(csv_err("no data rows".into()));
    }
    let width = rows[0].len();

    let target_cols: Vec<usize> = match schema {
        CsvSchema::TargetColumns(cols) => cols
            .iter()
            .map(|&c| resolve_column(c, width).ok_or_else(|| csv_err(format!("column {c} out of range"))))
            .collect::<Result<_>>()?,
        CsvSchema::LabelColumn(c) => {
            vec![resolve_column(*c, width).ok_or_else(|| csv_err(format!("column {c} out of range")))?]
        }
    };
    let feature_cols: Vec<usize> = (0..width).filter(|c| !target_cols.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(csv_err("no feature columns".into()));
    }

    let parse = |row: usize, col: usize, text: &str| -> Result<f64> {
        text.parse::<f64>()
            .map_err(|_| csv_err(format!("row {}: column {col} is not numeric: {text:?}", row + 1)))
    };

    let n = rows.len();
    let mut x = DMatrix::zeros(n, feature_cols.len());
    for (i, record) in rows.iter().enumerate() {
        for (j, &c) in feature_cols.iter().enumerate() {
            x[(i, j)] = parse(i, c, &record[c])?;
        }
    }

    match schema {
        CsvSchema::TargetColumns(_) => {
            let mut y = DMatrix::zeros(n, target_cols.len());
            for (i, record) in rows.iter().enumerate() {
                for (j, &c) in target_cols.iter().enumerate() {
                    y[(i, j)] = parse(i, c, &record[c])?;
                }
            }
            Dataset::regression(x, y)
        }
        CsvSchema::LabelColumn(_) => {
            let c = target_cols[0];
            let mut index: HashMap<String, usize> = HashMap::new();
            let mut class_labels = Vec::new();
            let labels = rows
                .iter()
                .map(|record| {
                    let name = record[c].to_string();
                    *index.entry(name.clone()).or_insert_with(|| {
                        class_labels.push(name);
                        class_labels.len() - 1
                    })
                })
                .collect();
            Dataset::classification(x, labels, class_labels)
        }
    }
}

/// Writes features followed by targets (or the label name) per row.
pub fn write_csv(path: &Path, ds: &Dataset, header: bool) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    if header {
        let mut names: Vec<String> = (0..ds.x.ncols()).map(|j| format!("x{j}")).collect();
        match ds.task {
            Task::Regression => names.extend((0..ds.y.ncols()).map(|j| format!("y{j}"))),
            Task::Classification => names.push("label".into()),
        }
        writer.write_record(&names).map_err(csv_err)?;
    }
    for i in 0..ds.len() {
        let mut fields: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        match (&ds.labels, ds.task) {
            (Some(labels), Task::Classification) => fields.push(ds.class_labels[labels[i]].clone()),
            _ => fields.extend(ds.y.row(i).iter().map(|v| v.to_string())),
        }
        writer.write_record(&fields).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-column affine map fitted on `ds` itself.
pub fn normalize(ds: &Dataset, mode: NormMode) -> Dataset {
    let mut reference = ds.clone();
    reference.feature_ranges = column_ranges(&ds.x);
    reference.target_ranges = column_ranges(&ds.y);
    normalize_like(ds, &reference, mode)
}

/// Applies the ranges recorded on `reference` (typically the training set).
pub fn normalize_like(ds: &Dataset, reference: &Dataset, mode: NormMode) -> Dataset {
    let iv = mode.interval();
    let mut out = ds.clone();
    out.feature_ranges = reference.feature_ranges.clone();
    out.target_ranges = reference.target_ranges.clone();
    out.x = DMatrix::from_fn(ds.x.nrows(), ds.x.ncols(), |i, j| {
        out.feature_ranges[j].forward(ds.x[(i, j)], iv)
    });
    if mode.scales_targets() && ds.task == Task::Regression {
        out.y = DMatrix::from_fn(ds.y.nrows(), ds.y.ncols(), |i, j| {
            out.target_ranges[j].forward(ds.y[(i, j)], iv)
        });
    }
    out.normalization = Some(mode);
    out
}

/// Inverse of [`normalize`]; identity for data that was never normalized.
pub fn denormalize(ds: &Dataset) -> Dataset {
    let Some(mode) = ds.normalization else {
        return ds.clone();
    };
    let iv = mode.interval();
    let mut out = ds.clone();
    out.x = DMatrix::from_fn(ds.x.nrows(), ds.x.ncols(), |i, j| {
        ds.feature_ranges[j].inverse(ds.x[(i, j)], iv)
    });
    if mode.scales_targets() && ds.task == Task::Regression {
        out.y = DMatrix::from_fn(ds.y.nrows(), ds.y.ncols(), |i, j| {
            ds.target_ranges[j].inverse(ds.y[(i, j)], iv)
        });
    }
    out.normalization = None;
    out
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::InvalidParameter(format!(
                "label {l} at row {i} is outside [0, {classes})"
            )));
        }
        y[(i, l)] = 1.0;
    }
    Ok(y)
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("fraction must lie in [0, 1], got {p}")))
    }
}

/// Number of contaminated rows, `ceil(p * n)`.
pub fn contaminated_count(n: usize, p: f64) -> usize {
    ((p * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// The distinct rows selected for contamination, in ascending order.
pub fn contaminated_rows(n: usize, p: f64, seed: u64) -> Result<Vec<usize>> {
    check_fraction(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample_indices(&mut rng, n, contaminated_count(n, p)).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

/// Adds `U[lo, hi]` draws to the targets of `ceil(p N)` rows.
pub fn inject_target_outliers(ds: &Dataset, p: f64, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    if ds.task != Task::Regression {
        return Err(Error::UnsupportedTask(
            "target outliers apply to regression data".into(),
        ));
    }
    if !(lo <= hi) {
        return Err(Error::InvalidParameter(format!("empty outlier interval [{lo}, {hi}]")));
    }
    let rows = contaminated_rows(ds.len(), p, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut out = ds.clone();
    for &i in &rows {
        for j in 0..out.y.ncols() {
            out.y[(i, j)] += rng.random_range(lo..=hi);
        }
    }
    Ok(out)
}

/// Adds `noise` (one value per row) to every input column of a row.
pub fn add_input_noise(ds: &Dataset, noise: &[f64]) -> Result<Dataset> {
    check_dim("noise length", ds.len(), noise.len())?;
    let mut out = ds.clone();
    for (mut row, &e) in out.x.row_iter_mut().zip(noise) {
        row.add_scalar_mut(e);
    }
    Ok(out)
}

/// Adds `noise` to the single target column.
pub fn add_target_noise(ds: &Dataset, noise: &[f64]) -> Result<Dataset> {
    check_dim("noise length", ds.len(), noise.len())?;
    check_dim("target columns", 1, ds.y.ncols())?;
    let mut out = ds.clone();
    for (i, &e) in noise.iter().enumerate() {
        out.y[(i, 0)] += e;
    }
    Ok(out)
}

/// Swaps the two classes on `ceil(p N)` rows.
pub fn flip_labels(ds: &Dataset, p: f64, seed: u64) -> Result<Dataset> {
    let labels = match (&ds.labels, ds.task) {
        (Some(l), Task::Classification) if ds.num_classes() == 2 => l,
        _ => {
            return Err(Error::UnsupportedTask(
                "label flipping needs a binary classification dataset".into(),
            ))
        }
    };
    let mut flipped = labels.clone();
    for i in contaminated_rows(ds.len(), p, seed)? {
        flipped[i] = 1 - flipped[i];
    }
    let mut out = ds.clone();
    out.y = one_hot(&flipped, 2)?;
    out.labels = Some(flipped);
    Ok(out)
}

/// `y = sin(x) / x` with `x ~ U[-10, 10]` plus Gaussian noise of the given std.
pub fn sinc(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DMatrix::zeros(n, 1);
    for i in 0..n {
        let v: f64 = rng.random_range(-10.0..=10.0);
        let e: f64 = StandardNormal.sample(&mut rng);
        x[(i, 0)] = v;
        y[(i, 0)] = if v == 0.0 { 1.0 } else { v.sin() / v } + noise_std * e;
    }
    Dataset::regression(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Gain of the delayed feedback term.
    pub a: f64,
    /// Decay rate.
    pub b: f64,
    pub tau: f64,
    pub dt: f64,
    /// Discarded time units before the first emitted sample.
    pub warmup: usize,
    pub n: usize,
    /// Constant history on `[-tau, 0]`.
    pub x0: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 0.2,
            tau: 30.0,
            dt: 0.1,
            warmup: 1000,
            n: 1200,
            x0: 1.2,
        }
    }
}

impl SeriesConfig {
    /// The chaotic regime (`a = 0.2`, `b = 0.1`, `tau = 30`).
    pub fn chaotic() -> Self {
        Self {
            a: 0.2,
            b: 0.1,
            ..Self::default()
        }
    }

    fn steps_per_unit(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        let k = (1.0 / self.dt).round();
        if ((1.0 / self.dt) - k).abs() > 1e-9 * k {
            return Err(Error::InvalidParameter(format!(
                "dt must divide the unit sampling interval, got {}",
                self.dt
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps_per_unit()?;
        if !(self.tau >= self.dt && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau must be at least dt, got {}",
                self.tau
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("series length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mackey-Glass series, `dx/dt = -b x(t) + a x(t - tau) / (1 + x(t - tau)^10)`.
///
/// Fourth-order Runge-Kutta with the delayed value linearly interpolated from the
/// stored trajectory; samples are taken at unit intervals after the warmup.
pub fn mackey_glass(cfg: &SeriesConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let spu = cfg.steps_per_unit()?;
    let dt = 1.0 / spu as f64;
    let total_steps = (cfg.warmup + cfg.n - 1) * spu;
    let lag = cfg.tau / dt;

    let mut path = Vec::with_capacity(total_steps + 1);
    path.push(cfg.x0);
    let delayed = |path: &[f64], s: f64| -> f64 {
        let pos = s - lag;
        if pos <= 0.0 {
            return cfg.x0;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if frac == 0.0 {
            path[i]
        } else {
            path[i] * (1.0 - frac) + path[i + 1] * frac
        }
    };
    let f = |x: f64, xd: f64| -cfg.b * x + cfg.a * xd / (1.0 + xd.powi(10));

    let mut x = cfg.x0;
    for step in 0..total_steps {
        let s = step as f64;
        let d0 = delayed(&path, s);
        let dh = delayed(&path, s + 0.5);
        let d1 = delayed(&path, s + 1.0);
        let k1 = f(x, d0);
        let k2 = f(x + 0.5 * dt * k1, dh);
        let k3 = f(x + 0.5 * dt * k2, dh);
        let k4 = f(x + dt * k3, d1);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        path.push(x);
    }
    Ok((0..cfg.n).map(|i| path[(cfg.warmup + i) * spu]).collect())
}

pub fn gaussian_noise(n: usize, variance: f64, seed: u64) -> Result<Vec<f64>> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance must be non-negative, got {variance}")));
    }
    let sd = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect())
}

/// Symmetric alpha-stable draws with characteristic function `exp(-gamma |w|^alpha)`
/// (Chambers-Mallows-Stuck).
pub fn alpha_stable_noise(n: usize, alpha: f64, gamma_scale: f64, seed: u64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if !(gamma_scale > 0.0 && gamma_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dispersion must be positive, got {gamma_scale}"
        )));
    }
    let scale = gamma_scale.powf(1.0 / alpha);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = rng.random_range(-half_pi..half_pi);
        let w: f64 = Exp1.sample(&mut rng);
        if v == -half_pi || w == 0.0 {
            continue;
        }
        let x = if alpha == 1.0 {
            v.tan()
        } else {
            (alpha * v).sin() / v.cos().powf(1.0 / alpha)
                * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
        };
        out.push(scale * x);
    }
    Ok(out)
}

/// Time-delay embedding: row `t` is `[x(t - dim*delay), ..., x(t - delay)]`, target `x(t)`.
pub fn embed_series(series: &[f64], dim: usize, delay: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if dim == 0 || delay == 0 {
        return Err(Error::InvalidParameter("embedding dimension and delay must be positive".into()));
    }
    let span = dim * delay;
    if series.len() <= span {
        return Err(Error::InvalidParameter(format!(
            "series of length {} is too short for dim {dim} and delay {delay}",
            series.len()
        )));
    }
    let rows = series.len() - span;
    let x = DMatrix::from_fn(rows, dim, |i, j| series[i + j * delay]);
    let y = DVector::from_fn(rows, |i, _| series[i + span]);
    Ok((x, y))
}
