use std::path::{Path, PathBuf};
use std::process::ExitCode;

use broadlearn::bls::BlsModel;
use broadlearn::cbls::{CblsModel, TrainConfig};
use broadlearn::datasets::{
    alpha_stable_noise, gaussian_noise, load_csv, mackey_glass, sinc, write_csv, CsvSchema,
    Dataset, SeriesConfig, Task,
};
use broadlearn::harness::{
    self, contamination_sweep, grid_search, write_sweep_csv, Contamination, ExperimentConfig,
    ModelKind, NoiseSite, Selection,
};
use broadlearn::persist::model_kind;
use broadlearn::{Architecture, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "broadlearn", version, about = "Broad learning system and correntropy-based BLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a CSV file and write it as JSON.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Apply an incremental update to a saved model.
    Increment(IncrementArgs),
    /// Generate a synthetic series or dataset.
    Gen(GenArgs),
    /// Contamination sweep comparing BLS and C-BLS.
    Bench(BenchArgs),
    /// Grid search with Monte-Carlo repetitions.
    Grid(GridArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Bls,
    Cbls,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Bls => ModelKind::Bls,
            ModelArg::Cbls => ModelKind::Cbls,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// The CSV files have a header row.
    #[arg(long)]
    header: bool,
    /// Target columns (regression) or the label column (classification); negative counts from the end.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1")]
    targets: Vec<isize>,
}

impl DataArgs {
    fn load(&self, path: &Path, task: Task) -> Result<Dataset, Error> {
        let schema = match task {
            Task::Regression => CsvSchema::TargetColumns(self.targets.clone()),
            Task::Classification => CsvSchema::LabelColumn(self.targets[0]),
        };
        load_csv(path, &schema, self.header)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "cbls")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "regression")]
    task: TaskArg,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Nodes per feature group.
    #[arg(long, default_value_t = 5)]
    nf: usize,
    /// Feature groups.
    #[arg(long, default_value_t = 5)]
    nw: usize,
    /// Enhancement nodes.
    #[arg(long, default_value_t = 50)]
    ne: usize,
    #[arg(long, default_value_t = 2f64.powi(-30))]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Exit with status 2 if the fixed-point iteration does not converge.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Predictions CSV.
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Mode {
    Samples,
    Enhancement,
    Features,
}

#[derive(Args)]
struct IncrementArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// New samples (mode samples).
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Enhancement nodes to add (mode enhancement).
    #[arg(long, default_value_t = 10)]
    ne: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-optimize the sample weights over all cached data afterwards (cbls only).
    #[arg(long)]
    refresh: bool,
    /// Output model; defaults to overwriting the input.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    MackeyGlass,
    Sinc,
    AlphaStable,
    Gaussian,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    out: PathBuf,
    /// Number of points/rows.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mackey-Glass in the chaotic regime (a = 0.2, b = 0.1).
    #[arg(long)]
    chaotic: bool,
    /// Noise std for sinc targets.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Alpha-stable dispersion, or Gaussian variance.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
}

#[derive(Args)]
struct GridSpace {
    #[arg(long, value_delimiter = ',', default_values_t = [5usize])]
    nf: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize])]
    nw: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [50usize])]
    ne: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2f64.powi(-30)])]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.03125, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score grid cells on a validation split of the training data or on the test set.
    #[arg(long, value_enum, default_value = "validation")]
    select: SelectArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    None,
    Outliers,
    Flip,
    AlphaStable,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum SiteArg {
    Targets,
    Inputs,
}

#[derive(Args)]
struct ContaminationArgs {
    #[arg(long, value_enum, default_value = "none")]
    contamination: NoiseArg,
    /// Contaminated fraction (outliers, flip).
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Alpha-stable dispersion, or Gaussian variance.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, value_enum, default_value = "targets")]
    noise_site: SiteArg,
}

impl ContaminationArgs {
    fn spec(&self) -> Contamination {
        let site = match self.noise_site {
            SiteArg::Targets => NoiseSite::Targets,
            SiteArg::Inputs => NoiseSite::Inputs,
        };
        match self.contamination {
            NoiseArg::None => Contamination::None,
            NoiseArg::Outliers => Contamination::TargetOutliers {
                p: self.p,
                lo: 0.0,
                hi: 1.0,
            },
            NoiseArg::Flip => Contamination::LabelFlip { p: self.p },
            NoiseArg::AlphaStable => Contamination::AlphaStable {
                alpha: self.alpha,
                gamma: self.scale,
                site,
            },
            NoiseArg::Gaussian => Contamination::Gaussian {
                variance: self.scale,
                site,
            },
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_enum, default_value = "cbls")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "regression")]
    task: TaskArg,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Report JSON; a per-cell CSV summary is written next to it.
    #[arg(long, default_value = "grid.json")]
    out: PathBuf,
    #[command(flatten)]
    space: GridSpace,
    #[command(flatten)]
    contamination: ContaminationArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Training CSV; defaults to 500 synthetic sinc samples.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4])]
    p_list: Vec<f64>,
    /// Curve CSV; the JSON sweep is written next to it.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    #[command(flatten)]
    space: GridSpace,
    #[command(flatten)]
    data: DataArgs,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IllConditioned(_) | Error::RegularizedIncrement { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key}={value}");
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "rmse",
        Task::Classification => "accuracy",
    }
}

enum Model {
    Bls(BlsModel),
    Cbls(CblsModel),
}

impl Model {
    fn load(path: &Path) -> Result<Model, Error> {
        let text = std::fs::read_to_string(path)?;
        match model_kind(&text)?.as_str() {
            "bls" => Ok(Model::Bls(BlsModel::from_json(&text)?)),
            "cbls" => Ok(Model::Cbls(CblsModel::from_json(&text)?)),
            other => Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
        }
    }

    fn save(&self, path: &Path) -> Result<(), Error> {
        match self {
            Model::Bls(m) => m.save(path),
            Model::Cbls(m) => m.save(path),
        }
    }

    fn task(&self) -> Task {
        match self {
            Model::Bls(m) => m.task(),
            Model::Cbls(m) => m.task(),
        }
    }

    fn class_labels(&self) -> &[String] {
        match self {
            Model::Bls(m) => m.class_labels(),
            Model::Cbls(m) => m.class_labels(),
        }
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
        match self {
            Model::Bls(m) => m.predict(x),
            Model::Cbls(m) => m.predict(x),
        }
    }

    fn width(&self) -> usize {
        match self {
            Model::Bls(m) => m.weights().nrows(),
            Model::Cbls(m) => m.weights().nrows(),
        }
    }

    fn samples(&self) -> usize {
        match self {
            Model::Bls(m) => m.inputs().nrows(),
            Model::Cbls(m) => m.inputs().nrows(),
        }
    }

    /// Dataset in the model's label order.
    fn align(&self, ds: Dataset) -> Result<Dataset, Error> {
        if ds.task == Task::Classification && !self.class_labels().is_empty() {
            ds.relabel(self.class_labels())
        } else {
            Ok(ds)
        }
    }

    fn report(&self, prefix: &str, ds: &Dataset) -> CmdResult {
        let pred = self.predict(&ds.x)?;
        let value = harness::score(self.task(), &pred, ds)?;
        kv(&format!("{prefix}_{}", metric_name(self.task())), value);
        Ok(())
    }

    fn print_summary(&self) {
        kv("model", match self {
            Model::Bls(_) => "bls",
            Model::Cbls(_) => "cbls",
        });
        kv("samples", self.samples());
        kv("width", self.width());
        if let Model::Cbls(m) = self {
            kv("iterations", m.trace().iterations);
            kv("converged", m.converged());
        }
    }
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let task: Task = a.task.into();
    let train = a.data.load(&a.train, task)?;
    let test = a.test.as_ref().map(|p| a.data.load(p, task)).transpose()?;
    let arch = Architecture::new(train.x.ncols(), train.y.ncols(), a.nw, a.nf, 1, a.ne)?;
    let mut model = match a.model {
        ModelArg::Bls => Model::Bls(BlsModel::train(&train.x, &train.y, &arch, a.gamma, a.seed, task)?),
        ModelArg::Cbls => {
            let config = TrainConfig {
                gamma: a.gamma,
                sigma: a.sigma,
                epsilon: a.eps,
                max_iter: a.max_iter,
                seed: a.seed,
            };
            Model::Cbls(CblsModel::train(&train.x, &train.y, &arch, &config, task)?)
        }
    };
    if task == Task::Classification {
        match &mut model {
            Model::Bls(m) => m.set_class_labels(train.class_labels.clone()),
            Model::Cbls(m) => m.set_class_labels(train.class_labels.clone()),
        }
    }
    model.print_summary();
    model.report("train", &train)?;
    if let Some(test) = test {
        model.report("test", &model.align(test)?)?;
    }
    model.save(&a.out)?;
    println!("{}", a.out.display());
    if let Model::Cbls(m) = &model {
        if a.strict && !m.converged() {
            return Err(Failure::Numerical(format!(
                "fixed-point iteration did not converge within {} iterations",
                a.max_iter
            )));
        }
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> CmdResult {
    let model = Model::load(&a.model_file)?;
    let test = model.align(a.data.load(&a.test, model.task())?)?;
    let pred = model.predict(&test.x)?;
    let mut out = test.clone();
    match model.task() {
        Task::Regression => out.y = pred.clone(),
        Task::Classification => {
            let labels = broadlearn::bls::decode_labels(&pred);
            out = Dataset::classification(test.x.clone(), labels, test.class_labels.clone())?;
        }
    }
    write_csv(&a.out, &out, a.data.header)?;
    kv("rows", test.len());
    kv(&format!("test_{}", metric_name(model.task())), harness::score(model.task(), &pred, &test)?);
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_increment(a: &IncrementArgs) -> CmdResult {
    let model = Model::load(&a.model_file)?;
    if a.refresh && matches!(model, Model::Bls(_)) {
        return Err(Failure::Usage("--refresh applies to cbls models only".into()));
    }
    if matches!(a.mode, Mode::Enhancement) && a.ne == 0 {
        return Err(Failure::Usage("--ne must be positive".into()));
    }
    let next = match a.mode {
        Mode::Samples => {
            let path = a
                .train
                .as_ref()
                .ok_or_else(|| Failure::Usage("--mode samples needs --train".into()))?;
            let ds = model.align(a.data.load(path, model.task())?)?;
            match &model {
                Model::Bls(m) => Model::Bls(m.add_samples(&ds.x, &ds.y)?),
                Model::Cbls(m) => Model::Cbls(m.add_samples(&ds.x, &ds.y)?),
            }
        }
        Mode::Enhancement => match &model {
            Model::Bls(m) => Model::Bls(m.add_enhancement(a.ne, a.seed)?),
            Model::Cbls(m) => Model::Cbls(m.add_enhancement(a.ne, a.seed)?),
        },
        Mode::Features => match &model {
            Model::Bls(m) => Model::Bls(m.add_features(a.seed)?),
            Model::Cbls(m) => Model::Cbls(m.add_features(a.seed)?),
        },
    };
    let next = match next {
        Model::Cbls(m) if a.refresh => Model::Cbls(m.refresh_weights()?),
        other => other,
    };
    next.print_summary();
    if let Some(path) = &a.test {
        next.report("test", &next.align(a.data.load(path, next.task())?)?)?;
    }
    let out = a.out.clone().unwrap_or_else(|| a.model_file.clone());
    next.save(&out)?;
    println!("{}", out.display());
    Ok(())
}

fn write_lines(path: &Path, values: &[f64]) -> CmdResult {
    let mut text = String::with_capacity(values.len() * 20);
    for v in values {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    match a.kind {
        GenKind::MackeyGlass => {
            let base = if a.chaotic {
                SeriesConfig::chaotic()
            } else {
                SeriesConfig::default()
            };
            let cfg = SeriesConfig {
                n: a.n.unwrap_or(base.n),
                ..base
            };
            let series = mackey_glass(&cfg)?;
            write_lines(&a.out, &series)?;
            kv("points", series.len());
        }
        GenKind::Sinc => {
            let ds = sinc(a.n.unwrap_or(500), a.noise, a.seed)?;
            write_csv(&a.out, &ds, false)?;
            kv("rows", ds.len());
        }
        GenKind::AlphaStable => {
            let v = alpha_stable_noise(a.n.unwrap_or(1000), a.alpha, a.scale, a.seed)?;
            write_lines(&a.out, &v)?;
            kv("points", v.len());
        }
        GenKind::Gaussian => {
            let v = gaussian_noise(a.n.unwrap_or(1000), a.scale, a.seed)?;
            write_lines(&a.out, &v)?;
            kv("points", v.len());
        }
    }
    println!("{}", a.out.display());
    Ok(())
}

fn experiment(model: ModelKind, task: Task, s: &GridSpace, contamination: Contamination) -> ExperimentConfig {
    ExperimentConfig {
        model,
        task,
        nf: s.nf.clone(),
        nw: s.nw.clone(),
        ne: s.ne.clone(),
        gammas: s.gamma.clone(),
        // the kernel size does not enter a BLS fit
        sigmas: match model {
            ModelKind::Bls => s.sigma.iter().take(1).copied().collect(),
            ModelKind::Cbls => s.sigma.clone(),
        },
        epsilon: s.eps,
        max_iter: s.max_iter,
        runs: s.runs,
        contamination,
        seed: s.seed,
        selection: match s.select {
            SelectArg::Validation => Selection::Validation,
            SelectArg::Test => Selection::Test,
        },
        ..ExperimentConfig::default()
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn cmd_grid(a: &GridArgs) -> CmdResult {
    let task: Task = a.task.into();
    let train = a.data.load(&a.train, task)?;
    let test = a.data.load(&a.test, task)?;
    let test = if task == Task::Classification {
        test.relabel(&train.class_labels)?
    } else {
        test
    };
    let expt = experiment(a.model.into(), task, &a.space, a.contamination.spec());
    let report = grid_search(&expt, &train, &test)?;
    report.save(&a.out)?;
    let csv = sibling(&a.out, "csv");
    report.write_summary_csv(&csv)?;
    kv("cells", report.grid.len());
    kv("best_nf", report.best.nf);
    kv("best_nw", report.best.nw);
    kv("best_ne", report.best.ne);
    kv("best_gamma", report.best.gamma);
    kv("best_sigma", report.best.sigma);
    kv(&format!("mean_test_{}", metric_name(task)), report.mean.test_metric);
    kv(&format!("std_test_{}", metric_name(task)), report.std.test_metric);
    kv("failures", report.failures);
    kv("summary", csv.display());
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let (train, test) = match (&a.train, &a.test) {
        (Some(tr), Some(te)) => (a.data.load(tr, Task::Regression)?, a.data.load(te, Task::Regression)?),
        (None, None) => (sinc(500, 0.0, a.space.seed)?, sinc(500, 0.0, a.space.seed.wrapping_add(1))?),
        _ => return Err(Failure::Usage("--train and --test must be given together".into())),
    };
    let outliers = Contamination::TargetOutliers {
        p: 0.0,
        lo: 0.0,
        hi: 1.0,
    };
    let experiments = [
        experiment(ModelKind::Bls, Task::Regression, &a.space, outliers),
        experiment(ModelKind::Cbls, Task::Regression, &a.space, outliers),
    ];
    let points = contamination_sweep(&experiments, &a.p_list, &train, &test)?;
    write_sweep_csv(&a.out, &points)?;
    let json = sibling(&a.out, "json");
    std::fs::write(&json, serde_json::to_string_pretty(&points).map_err(Error::from)?)?;
    kv("levels", a.p_list.len());
    for pt in &points {
        kv(&format!("{}_median_rmse_p{}", pt.model, pt.p), pt.median_test);
    }
    kv("curve", a.out.display());
    println!("{}", json.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Increment(a) => cmd_increment(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Grid(a) => cmd_grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
