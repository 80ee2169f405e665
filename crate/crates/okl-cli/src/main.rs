//! `okl`: train, apply and inspect multi-task output-kernel models.
//!
//! Subcommands: train | predict | eval | cv | export-theta | bench | verify.
//! Defaults may be supplied through `--config <file>` (one `key value` or
//! `key=value` pair per line, `#` comments); explicit flags override it.
//!
//! Exit codes: 0 success, 1 input/parse errors, 2 numerical errors,
//! 3 training stopped at the epoch cap without reaching the gap target.

#![allow(clippy::needless_range_loop)]

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use okl_core::bench::{self, BenchConfig, Variant};
use okl_core::dataio::{self, GramMatrix, MultiTaskDataset};
use okl_core::evalcv::{self, Metric};
use okl_core::kernels::{self, KernelSpec};
use okl_core::losses::LossSpec;
use okl_core::mat::SquareMat;
use okl_core::model::{self, Model, ThetaFormat, ThetaTransform};
use okl_core::oracle::{self, PGConfig};
use okl_core::regularizers::{RegKind, RegularizerSpec};
use okl_core::solver::{self, Sampling, SolverConfig, SubproblemMode};

const EXIT_PARSE: i32 = 1;
const EXIT_NUMERIC: i32 = 2;
const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug)]
enum CliError {
    Parse(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) | CliError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

fn parse_err(e: impl std::fmt::Display) -> CliError {
    CliError::Parse(e.to_string())
}

fn num_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "okl",
    version,
    about = "Multi-task learning with a learned output kernel"
)]
struct Cli {
    /// Defaults file (`key value` per line); explicit flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Significant digits for numeric output (default: full precision)
    #[arg(long, global = true)]
    digits: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a model and write it to a file
    Train(TrainArgs),
    /// Print per-sample scores (or one-vs-all classes) for a dataset
    Predict(PredictArgs),
    /// Evaluate a model on a labeled dataset
    Eval(EvalArgs),
    /// Cross-validate a (C, lambda) grid
    Cv(CvArgs),
    /// Export the task-relationship matrix
    ExportTheta(ExportArgs),
    /// Time solver variants against the alternating reference solver
    Bench(BenchArgs),
    /// Run the verification oracles
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelArg {
    Linear,
    Rbf,
    Precomputed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Hinge,
    Squared,
    EpsSvr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegArg {
    Pnorm,
    Entropy,
    Cosh,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplingArg {
    Perm,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SubproblemArg {
    Newton,
    Cubic,
    Auto,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Auc,
    Ev,
    Acc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Pgm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TransformArg {
    Raw,
    Abs,
    Log1pAbs,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Dataset file: `<task> <label> <idx>:<val> ...` per line
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Precomputed Gram matrix (CSV; first line is n)
    #[arg(long, value_name = "FILE")]
    gram: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    kernel: KernelArg,
    /// RBF bandwidth
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Args, Debug, Clone)]
struct LossArgs {
    #[arg(long, value_enum, default_value = "hinge")]
    loss: LossArg,
    /// Tube half-width for eps-svr
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
}

#[derive(Args, Debug, Clone)]
struct RegArgs {
    #[arg(long, value_enum, default_value = "pnorm")]
    reg: RegArg,
    /// pnorm exponent parameter; p = 2k/(2k-1)
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_epochs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "perm")]
    sampling: SamplingArg,
    #[arg(long, value_enum, default_value = "auto")]
    subproblem: SubproblemArg,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output model file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Test dataset (features ignored for precomputed-kernel models)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Kernel rows k(x_j, x_new), CSV, one row per test sample
    #[arg(long, value_name = "FILE")]
    gram_rows: Option<PathBuf>,
    /// Print the arg-max task (one-vs-all class) instead of a score
    #[arg(long)]
    multiclass: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    #[arg(long, value_name = "FILE")]
    gram_rows: Option<PathBuf>,
    #[arg(long, value_enum)]
    metric: MetricArg,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated C grid
    #[arg(long = "grid-C", value_name = "LIST")]
    grid_c: String,
    /// Comma-separated lambda grid
    #[arg(long, value_name = "LIST")]
    grid_lambda: String,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Write the score table here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "raw")]
    transform: TransformArg,
    /// Zero the diagonal and exclude it from the grayscale range
    #[arg(long)]
    drop_diagonal: bool,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated task counts
    #[arg(long, value_name = "LIST", default_value = "5,10,20")]
    tasks: String,
    #[arg(long, default_value_t = 10)]
    samples_per_task: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Comma-separated: sdca-newton, sdca-cubic, oracle-alternating
    #[arg(
        long,
        value_name = "LIST",
        default_value = "sdca-newton,sdca-cubic,oracle-alternating"
    )]
    variants: String,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on every check threshold; 0 makes all checks fail
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
}

impl LossArgs {
    fn spec(&self) -> Result<LossSpec, CliError> {
        match self.loss {
            LossArg::Hinge => Ok(LossSpec::Hinge),
            LossArg::Squared => Ok(LossSpec::Squared),
            LossArg::EpsSvr => LossSpec::eps_svr(self.epsilon).map_err(parse_err),
        }
    }
}

impl RegArgs {
    fn kind(&self) -> RegKind {
        match self.reg {
            RegArg::Pnorm => RegKind::PNorm { k: self.k },
            RegArg::Entropy => RegKind::Entropy,
            RegArg::Cosh => RegKind::CoshGen,
        }
    }

    fn spec(&self, c: f64) -> Result<RegularizerSpec, CliError> {
        RegularizerSpec::new(self.kind(), self.lambda, c).map_err(parse_err)
    }
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            c: self.c,
            gap_tol: self.gap_tol,
            max_epochs: self.max_epochs,
            seed: self.seed,
            sampling: match self.sampling {
                SamplingArg::Perm => Sampling::Permutation,
                SamplingArg::Uniform => Sampling::Uniform,
            },
            subproblem: match self.subproblem {
                SubproblemArg::Newton => SubproblemMode::Newton,
                SubproblemArg::Cubic => SubproblemMode::Cubic,
                SubproblemArg::Auto => SubproblemMode::Auto,
            },
            ..SolverConfig::default()
        }
    }
}

impl MetricArg {
    fn metric(self) -> Metric {
        match self {
            MetricArg::Auc => Metric::Auc,
            MetricArg::Ev => Metric::ExplainedVariance,
            MetricArg::Acc => Metric::Accuracy,
        }
    }

    fn name(self) -> &'static str {
        match self {
            MetricArg::Auc => "auc",
            MetricArg::Ev => "ev",
            MetricArg::Acc => "acc",
        }
    }
}

/// Numeric output honoring the global `--digits` override.
fn num(x: f64, digits: Option<usize>) -> String {
    match digits {
        None => format!("{x}"),
        Some(d) => format!("{:.*e}", d.saturating_sub(1), x),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<MultiTaskDataset, CliError> {
    dataio::parse_dataset(open(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

impl DataArgs {
    fn kernel_spec(&self) -> Result<KernelSpec, CliError> {
        match self.kernel {
            KernelArg::Linear => Ok(KernelSpec::Linear),
            KernelArg::Rbf => KernelSpec::rbf(self.gamma).map_err(parse_err),
            KernelArg::Precomputed => Ok(KernelSpec::Precomputed),
        }
    }

    fn load(&self) -> Result<(MultiTaskDataset, GramMatrix, KernelSpec), CliError> {
        let data = load_dataset(&self.data)?;
        let kernel = self.kernel_spec()?;
        let gram = match (&kernel, &self.gram) {
            (KernelSpec::Precomputed, Some(p)) => dataio::load_gram(open(p)?)
                .map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?,
            (KernelSpec::Precomputed, None) => {
                return Err(CliError::Parse(
                    "--kernel precomputed requires --gram".into(),
                ))
            }
            (_, _) => kernels::gram(&data, &kernel).map_err(num_err)?,
        };
        Ok((data, gram, kernel))
    }
}

/// Maps the model's original task ids to internal ids.
fn internal_task(model: &Model, original: i64) -> Result<usize, CliError> {
    model
        .task_ids
        .iter()
        .position(|&t| t == original)
        .map(|p| p + 1)
        .ok_or_else(|| CliError::Numeric(format!("task id {original} unknown to the model")))
}

/// Kernel rows for each test sample: either computed from features or read
/// from `--gram-rows`.
fn test_rows(
    model: &Model,
    data: &MultiTaskDataset,
    gram_rows: &Option<PathBuf>,
) -> Result<Vec<Vec<f64>>, CliError> {
    if let Some(path) = gram_rows {
        let mut rows = Vec::new();
        for (lineno, line) in open(path)?.lines().enumerate() {
            let line = line.map_err(parse_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse()).collect();
            let row = row
                .map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if row.len() != model.n() {
                return Err(CliError::Parse(format!(
                    "{}:{}: expected {} kernel values, found {}",
                    path.display(),
                    lineno + 1,
                    model.n(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != data.n() {
            return Err(CliError::Parse(format!(
                "{} kernel rows for {} test samples",
                rows.len(),
                data.n()
            )));
        }
        return Ok(rows);
    }
    let feats = data
        .features()
        .ok_or_else(|| CliError::Parse("test dataset has no features".into()))?;
    let support = model
        .features
        .as_ref()
        .ok_or_else(|| CliError::Parse("model kernel is precomputed; supply --gram-rows".into()))?;
    feats
        .iter()
        .map(|x| kernels::kernel_row(&model.kernel, support, x).map_err(num_err))
        .collect()
}

fn cmd_train(args: &TrainArgs, digits: Option<usize>) -> Result<i32, CliError> {
    let (data, gram, kernel) = args.data.load()?;
    let loss = args.loss.spec()?;
    let reg = args.reg.spec(args.solver.c)?;
    let config = args.solver.config();
    let start = Instant::now();
    let trained = solver::fit(&data, &gram, &kernel, loss, reg, config).map_err(num_err)?;
    let wall = start.elapsed().as_secs_f64();
    let mut file = File::create(&args.out)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.out.display())))?;
    model::save_to(&trained, &mut file).map_err(num_err)?;
    println!("epochs {}", trained.report.epochs);
    println!("gap {}", num(trained.report.final_gap, digits));
    println!("wall_seconds {}", num(wall, digits));
    println!("converged {}", trained.report.converged);
    Ok(if trained.report.converged {
        0
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    model::load(&text).map_err(parse_err)
}

fn cmd_predict(args: &PredictArgs, digits: Option<usize>) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let rows = test_rows(&model, &data, &args.gram_rows)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for i in 0..data.n() {
        let line = if args.multiclass {
            let pred = model
                .predict_multiclass_gram_row(&rows[i])
                .map_err(num_err)?;
            format!("{}", model.task_ids[pred - 1])
        } else {
            let original = data.original_task_id(data.task(i));
            let task = internal_task(&model, original)?;
            let score = model.predict_gram_row(&rows[i], task).map_err(num_err)?;
            format!("{original} {}", num(score, digits))
        };
        match writeln!(out, "{line}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(0),
            other => other.map_err(num_err)?,
        }
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs, digits: Option<usize>) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let rows = test_rows(&model, &data, &args.gram_rows)?;
    let metric = args.metric;
    if matches!(metric, MetricArg::Auc | MetricArg::Acc) && !model.loss.is_classification() {
        eprintln!(
            "warning: {} is a classification metric but the model was trained with {:?}",
            metric.name(),
            model.loss
        );
    }
    if matches!(metric, MetricArg::Ev) && model.loss.is_classification() {
        eprintln!("warning: explained variance on a classification model");
    }
    println!("task,metric,value");
    match metric {
        MetricArg::Acc => {
            // one-vs-all: rows labeled +1 carry each sample's true class
            let mut predicted = Vec::new();
            let mut truth = Vec::new();
            for i in 0..data.n() {
                if data.label(i) <= 0.0 {
                    continue;
                }
                let pred = model
                    .predict_multiclass_gram_row(&rows[i])
                    .map_err(num_err)?;
                predicted.push(pred);
                truth.push(internal_task(&model, data.original_task_id(data.task(i)))?);
            }
            let acc = evalcv::accuracy(&predicted, &truth).map_err(num_err)?;
            println!("all,acc,{}", num(acc, digits));
        }
        MetricArg::Auc | MetricArg::Ev => {
            let mut per_task: Vec<(Vec<f64>, Vec<f64>)> =
                vec![(Vec::new(), Vec::new()); model.num_tasks() + 1];
            for i in 0..data.n() {
                let original = data.original_task_id(data.task(i));
                let task = internal_task(&model, original)?;
                let score = model.predict_gram_row(&rows[i], task).map_err(num_err)?;
                per_task[task].0.push(score);
                per_task[task].1.push(data.label(i));
            }
            let mut values = Vec::new();
            for t in 1..=model.num_tasks() {
                let (scores, labels) = &per_task[t];
                if scores.is_empty() {
                    continue;
                }
                let value = match metric {
                    MetricArg::Auc => evalcv::auc(scores, labels),
                    MetricArg::Ev => evalcv::explained_variance(labels, scores),
                    MetricArg::Acc => unreachable!(),
                };
                match value {
                    Ok(v) => {
                        println!(
                            "{},{},{}",
                            model.task_ids[t - 1],
                            metric.name(),
                            num(v, digits)
                        );
                        values.push(v);
                    }
                    Err(e) => eprintln!("warning: task {} skipped: {e}", model.task_ids[t - 1]),
                }
            }
            if values.is_empty() {
                return Err(CliError::Numeric("no task produced a valid metric".into()));
            }
            let macro_avg = values.iter().sum::<f64>() / values.len() as f64;
            println!("macro,{},{}", metric.name(), num(macro_avg, digits));
        }
    }
    Ok(0)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("bad {what} list \"{text}\": {e}")))
}

fn cmd_cv(args: &CvArgs, digits: Option<usize>) -> Result<i32, CliError> {
    let (data, gram, _) = args.data.load()?;
    let loss = args.loss.spec()?;
    let grid_c = parse_list(&args.grid_c, "C")?;
    let grid_lambda = parse_list(&args.grid_lambda, "lambda")?;
    let mut grid = Vec::new();
    for &c in &grid_c {
        for &l in &grid_lambda {
            grid.push((c, l));
        }
    }
    let outcome = evalcv::cross_validate(
        &data,
        &gram,
        loss,
        args.reg.kind(),
        &grid,
        args.folds,
        args.metric.metric(),
        args.solver.seed,
        &args.solver.config(),
    )
    .map_err(num_err)?;
    println!(
        "best C {} lambda {} score {}",
        num(outcome.best_c, digits),
        num(outcome.best_lambda, digits),
        num(outcome.best_score, digits)
    );
    let table = outcome.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, table)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        None => print!("{table}"),
    }
    Ok(0)
}

fn cmd_export(args: &ExportArgs) -> Result<i32, CliError> {
    let model = load_model(&args.model)?;
    let format = match args.format {
        FormatArg::Csv => ThetaFormat::Csv,
        FormatArg::Pgm => ThetaFormat::Pgm,
    };
    let transform = match args.transform {
        TransformArg::Raw => ThetaTransform::Raw,
        TransformArg::Abs => ThetaTransform::Abs,
        TransformArg::Log1pAbs => ThetaTransform::Log1pAbs,
    };
    let mut file = File::create(&args.out)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.out.display())))?;
    model::export_theta(
        &model.theta,
        format,
        transform,
        args.drop_diagonal,
        &mut file,
    )
    .map_err(num_err)?;
    Ok(0)
}

fn cmd_bench(args: &BenchArgs) -> Result<i32, CliError> {
    let tasks_list: Vec<usize> = args
        .tasks
        .split(',')
        .map(|f| f.trim().parse())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse(format!("bad task list \"{}\": {e}", args.tasks)))?;
    let mut variants = Vec::new();
    for name in args.variants.split(',') {
        variants.push(match name.trim() {
            "sdca-newton" => Variant::SdcaNewton,
            "sdca-cubic" => Variant::SdcaCubic,
            "oracle-alternating" => Variant::OracleAlternating,
            other => return Err(CliError::Parse(format!("unknown variant \"{other}\""))),
        });
    }
    let cfg = BenchConfig {
        tasks_list,
        samples_per_task: args.samples_per_task,
        dim: args.dim,
        noise: args.noise,
        seed: args.solver.seed,
        loss: args.loss.spec()?,
        reg_kind: args.reg.kind(),
        lambda: args.reg.lambda,
        c: args.solver.c,
        gap_tol: args.solver.gap_tol,
        max_epochs: args.solver.max_epochs,
        oracle_max_outer: 2000,
    };
    let rows = bench::run(&cfg, &variants).map_err(num_err)?;
    let csv = bench::rows_to_csv(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(0)
}

// ---- verify ---------------------------------------------------------------

fn random_psd_scaled(t: usize, rng: &mut rand_chacha::ChaCha8Rng, target_max: f64) -> SquareMat {
    use rand::Rng;
    let a: Vec<f64> = (0..t * t).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let mut m = SquareMat::zeros(t);
    for i in 0..t {
        for j in 0..t {
            let v: f64 = (0..t).map(|l| a[i * t + l] * a[j * t + l]).sum();
            m.set(i, j, v);
        }
    }
    let s = target_max / m.max_abs().max(1e-12);
    m.map(|v| v * s)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    use rand::{Rng, SeedableRng};
    let tol = args.tolerance;
    let mut all_ok = true;
    let mut check = |name: &str, pass: bool, details: String| {
        println!(
            "check {name}: {} ({details})",
            if pass { "ok" } else { "FAIL" }
        );
        all_ok &= pass;
    };

    // analytic maximizer vs projected gradient
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let mut worst_elem = 0.0f64;
    let mut worst_val = 0.0f64;
    for trial in 0..12 {
        let t = 2 + trial % 3;
        let target = 0.3 + 0.4 * rng.gen::<f64>();
        let rho = random_psd_scaled(t, &mut rng, target);
        for k in [1u32, 2, 4] {
            let lambda = 0.5 + rng.gen::<f64>();
            let spec = RegularizerSpec::new(RegKind::PNorm { k }, lambda, 1.0).map_err(num_err)?;
            let inner = rho.map(|v| 2.0 * lambda * v);
            let analytic = spec.theta_from_rho(&inner).map_err(num_err)?;
            let numeric = oracle::maximize_over_psd_cone(&rho, k, &PGConfig::default());
            for i in 0..t {
                for j in 0..t {
                    worst_elem =
                        worst_elem.max((analytic.get(i, j) - numeric.theta.get(i, j)).abs());
                }
            }
            let kf = k as f64;
            let closed = 1.0 / (4.0 * kf - 2.0)
                * ((2.0 * kf - 1.0) / kf).powi(2 * k as i32)
                * rho
                    .as_slice()
                    .iter()
                    .map(|&x| x.powi(2 * k as i32))
                    .sum::<f64>();
            worst_val = worst_val.max((numeric.value - closed).abs() / closed.abs().max(1e-12));
        }
    }
    check(
        "closed-form-maximizer",
        worst_elem <= 1e-4 * tol && worst_val <= 1e-6 * tol,
        format!("worst elementwise {worst_elem:.2e}, worst value rel {worst_val:.2e}"),
    );

    // PSD preservation of the recovery map
    let kinds = [
        RegKind::PNorm { k: 1 },
        RegKind::PNorm { k: 2 },
        RegKind::PNorm { k: 4 },
        RegKind::Entropy,
        RegKind::CoshGen,
    ];
    let mut min_eig = f64::INFINITY;
    for trial in 0..60 {
        let t = 2 + trial % 9;
        let scale = 0.5 + 2.0 * rng.gen::<f64>();
        let inner = random_psd_scaled(t, &mut rng, scale);
        let spec = RegularizerSpec::new(kinds[trial % kinds.len()], 0.5 + rng.gen::<f64>(), 1.0)
            .map_err(num_err)?;
        let theta = spec.theta_from_rho(&inner).map_err(num_err)?;
        min_eig = min_eig.min(oracle::min_eigenvalue(theta.mat()));
    }
    check(
        "psd-preservation",
        min_eig >= -1e-8 * tol,
        format!("min eigenvalue {min_eig:.2e}"),
    );

    // dual gradient vs finite differences
    let ds = dataio::synth_clustered(3, &[vec![1, 2], vec![3]], 6, 4, 0.2, args.seed)
        .map_err(num_err)?;
    let gram = kernels::gram(&ds, &KernelSpec::Linear).map_err(num_err)?;
    let mut worst_grad = 0.0f64;
    for (loss, kind) in [
        (LossSpec::Hinge, RegKind::PNorm { k: 1 }),
        (LossSpec::Squared, RegKind::PNorm { k: 2 }),
        (LossSpec::EpsSvr { epsilon: 0.1 }, RegKind::CoshGen),
        (LossSpec::Hinge, RegKind::Entropy),
    ] {
        let reg = RegularizerSpec::new(kind, 0.8, 1.0).map_err(num_err)?;
        let cfg = SolverConfig::default();
        let make = || solver::Solver::new(&ds, &gram, loss, reg, cfg).map_err(num_err);
        let mut s = make()?;
        for _ in 0..20 {
            let mut alpha: Vec<f64> = (0..ds.n())
                .map(|i| {
                    let y = ds.label(i);
                    match loss {
                        LossSpec::Hinge => y * (0.2 + 0.5 * rng.gen::<f64>()),
                        LossSpec::Squared => 0.6 * rng.gen::<f64>() - 0.3,
                        LossSpec::EpsSvr { .. } => {
                            let mag = 0.2 + 0.4 * rng.gen::<f64>();
                            if rng.gen::<bool>() {
                                mag
                            } else {
                                -mag
                            }
                        }
                    }
                })
                .collect();
            s.set_alpha(&alpha).map_err(num_err)?;
            // keep the dual small enough for central differences to have
            // significant digits left
            for _ in 0..12 {
                if s.dual_objective().abs() <= 1e4 {
                    break;
                }
                for a in alpha.iter_mut() {
                    *a *= 0.5;
                }
                s.set_alpha(&alpha).map_err(num_err)?;
            }
            let i = rng.gen_range(0..ds.n());
            let g = s.dual_grad(i);
            let h = 1e-6 * (1.0 + alpha[i].abs());
            let mut up = alpha.clone();
            up[i] += h;
            let mut down = alpha.clone();
            down[i] -= h;
            let mut su = make()?;
            su.set_alpha(&up).map_err(num_err)?;
            let mut sd = make()?;
            sd.set_alpha(&down).map_err(num_err)?;
            let fd = (su.dual_objective() - sd.dual_objective()) / (2.0 * h);
            worst_grad = worst_grad.max((g - fd).abs() / (1.0 + g.abs()));
        }
    }
    check(
        "dual-gradient",
        worst_grad <= 1e-5 * tol,
        format!("worst relative error {worst_grad:.2e}"),
    );

    if all_ok {
        Ok(0)
    } else {
        Err(CliError::Numeric("verification failed".into()))
    }
}

// ---- config merging --------------------------------------------------------

/// Reads `--config FILE` ahead of clap and splices the file's `key value`
/// pairs in right after the subcommand, so explicit flags override them.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut config_path: Option<String> = None;
    for (i, arg) in argv.iter().enumerate() {
        if arg == "--config" {
            config_path = argv.get(i + 1).cloned();
        } else if let Some(rest) = arg.strip_prefix("--config=") {
            config_path = Some(rest.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::Parse(format!("{path}: {e}")))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| {
                CliError::Parse(format!("{path}:{}: expected `key value`", lineno + 1))
            })?;
        let key = key.trim();
        let value = value.trim();
        let flag = format!("--{key}");
        // an explicit command-line flag wins over the config file
        let given = argv
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        extra.push(flag);
        if !value.is_empty() {
            extra.push(value.to_string());
        }
    }
    // insert after the subcommand token (first non-flag after the binary)
    let mut merged = Vec::with_capacity(argv.len() + extra.len());
    let mut iter = argv.into_iter();
    let bin = iter.next().unwrap_or_default();
    merged.push(bin);
    let mut inserted = false;
    for arg in iter {
        let is_sub = !inserted && !arg.starts_with('-');
        merged.push(arg);
        if is_sub {
            merged.extend(extra.iter().cloned());
            inserted = true;
        }
    }
    Ok(merged)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match &cli.cmd {
        Cmd::Train(args) => cmd_train(args, cli.digits),
        Cmd::Predict(args) => cmd_predict(args, cli.digits),
        Cmd::Eval(args) => cmd_eval(args, cli.digits),
        Cmd::Cv(args) => cmd_cv(args, cli.digits),
        Cmd::ExportTheta(args) => cmd_export(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Verify(args) => cmd_verify(args),
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let merged = match merge_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(&merged) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            std::process::exit(EXIT_PARSE);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
