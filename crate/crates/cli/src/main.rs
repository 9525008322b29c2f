//! `robsvm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or file error, 3 solver
//! failure. Diagnostics go to standard error; data goes to files or
//! standard output.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use robsvm::bench::{
    self, BenchError, ContaminationFamily, ContaminationSpec, ExperimentConfig, MethodSpec,
    TuningGrid,
};
use robsvm::data::{self, DataError, Dataset};
use robsvm::fairness::{self, FairnessError, StratifiedOutcome};
use robsvm::kernels::KernelSpec;
use robsvm::losses::{self, LossError, LossSpec};
use robsvm::noise::{NoiseError, NoiseFamily, NoiseSpec};
use robsvm::qp::{self, QpError};
use robsvm::svm::{SvmError, TrainSpec, TrainedModel, Variant};

const SEED_HELP: &str = "Random seed [default: 20240601]";

#[derive(Parser, Debug)]
#[command(
    name = "robsvm",
    version,
    about = "Robust SVM training (C-SVM, SP-SVM, EEL-SVM) and experiment tools"
)]
struct Cli {
    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on standard error (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write it as JSON
    Train(TrainArgs),
    /// Apply a saved model to a dataset
    Predict(PredictArgs),
    /// Grid search by k-fold cross-validation
    Cv(CvArgs),
    /// Repeated synthetic benchmark against the Bayes line x2 = 2.5 x1
    SynthBench(SynthBenchArgs),
    /// Generate and/or contaminate a dataset
    Contaminate(ContaminateArgs),
    /// Denial rates, demographic disparity and CDD of a decision file
    Fairness(FairnessArgs),
    /// Grid minimizer of the conditional risk p L(1-z) + q L(1+z)
    FisherCheck(FisherArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Auto,
    Csv,
    Libsvm,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input dataset (CSV with header, or LIBSVM)
    #[arg(long)]
    data: PathBuf,
    /// File format; `auto` picks CSV for a .csv extension and LIBSVM otherwise
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    /// Label column of a CSV file
    #[arg(long, default_value = "y")]
    label: String,
    /// CSV columns to leave out, comma separated
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Copy, Clone, Debug, ValueEnum, PartialEq)]
enum NoiseKind {
    Gaussian,
    T,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// SP-SVM noise distribution
    #[arg(long, value_enum, default_value_t = NoiseKind::Gaussian)]
    noise: NoiseKind,
    /// Degrees of freedom for `--noise t`
    #[arg(long)]
    dof: Option<f64>,
    /// SP-SVM perturbed feature: `auto` (largest standard deviation) or a 0-based index
    #[arg(long, default_value = "auto")]
    feature_index: String,
}

impl NoiseArgs {
    fn family(&self) -> Result<(NoiseFamily, f64)> {
        match (self.noise, self.dof) {
            (NoiseKind::Gaussian, None) => Ok((NoiseFamily::Gaussian, 0.0)),
            (NoiseKind::Gaussian, Some(_)) => Err(usage("--dof only applies to --noise t")),
            (NoiseKind::T, Some(d)) if d > 0.0 && d.is_finite() => Ok((NoiseFamily::StudentT, d)),
            (NoiseKind::T, Some(d)) => Err(usage(format!("--dof must be positive, got {d}"))),
            (NoiseKind::T, None) => Err(usage("--noise t needs --dof")),
        }
    }

    fn feature(&self) -> Result<Option<usize>> {
        if self.feature_index == "auto" {
            return Ok(None);
        }
        self.feature_index.parse::<usize>().map(Some).map_err(|_| {
            usage(format!(
                "--feature-index must be `auto` or an integer, got `{}`",
                self.feature_index
            ))
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Model variant
    #[arg(long, value_parser = parse_variant)]
    model: Variant,
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    kernel: KernelKind,
    /// RBF width in exp(-gamma |x - x'|^2)
    #[arg(long)]
    gamma: Option<f64>,
    /// Penalty C (c-svm, sp-svm)
    #[arg(long = "C")]
    c: Option<f64>,
    /// Penalty D (eel-svm)
    #[arg(long = "D")]
    d: Option<f64>,
    /// Level alpha: chance level in [0.5, 1) for sp-svm, EEL level in [0, 1) for eel-svm
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Rescale features to [0, 1] using training ranges (stored in the model)
    #[arg(long)]
    rescale: bool,
    /// Also write the dual quadratic program to this file
    #[arg(long)]
    dump_qp: Option<PathBuf>,
    /// Model output file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model file written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Dataset to score (CSV with header, or LIBSVM)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    /// Label column; when present, accuracy is reported on standard error
    #[arg(long)]
    label: Option<String>,
    /// CSV columns to leave out, comma separated
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
    /// Output CSV (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, value_parser = parse_variant)]
    model: Variant,
    #[arg(long, value_enum, default_value_t = KernelKind::Rbf)]
    kernel: KernelKind,
    /// TOML grid with `penalty`, `gamma` and `level` lists. For eel-svm each
    /// penalty is multiplied by the training size. Defaults: the real-data
    /// grids for rbf, C = 100 and the synthetic levels for linear.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, help = SEED_HELP)]
    seed: Option<u64>,
    /// Add white Gaussian noise at this SNR (dB) to the training data first
    #[arg(long)]
    snr_db: Option<f64>,
    /// Rescale features to [0, 1] before tuning
    #[arg(long)]
    rescale: bool,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Held-out set; the best candidate is refit on all training data and scored here
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output CSV of per-candidate accuracy (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthBenchArgs {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration seed
    #[arg(long, help = SEED_HELP)]
    seed: Option<u64>,
    /// Summary CSV; fit timings go to `<out>.timing.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ContaminateArgs {
    /// Input dataset; omit to generate the synthetic benchmark sample
    #[arg(long, conflicts_with = "generate")]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    #[arg(long, default_value = "y")]
    label: String,
    /// Generate this many synthetic rows
    #[arg(long)]
    generate: Option<usize>,
    /// Fraction of rows to replace by elliptical outliers (two features only)
    #[arg(long)]
    ratio: Option<f64>,
    /// Outlier distribution: normal, t5 or t1
    #[arg(long, default_value = "normal")]
    family: String,
    /// Add white Gaussian noise at this SNR (dB)
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, help = SEED_HELP)]
    seed: Option<u64>,
    /// Output CSV (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FairnessArgs {
    /// CSV holding the decisions (+1 approve, -1 deny)
    #[arg(long)]
    predictions: PathBuf,
    /// Column with the decisions
    #[arg(long, default_value = "prediction")]
    outcome_column: String,
    /// Stratum column (read from --strata-file if given, else from --predictions)
    #[arg(long)]
    strata_column: String,
    /// Separate CSV with the strata, row-aligned with the predictions
    #[arg(long)]
    strata_file: Option<PathBuf>,
    /// Declared strata, comma separated; empty ones are reported as NA
    #[arg(long, value_delimiter = ',')]
    levels: Vec<String>,
    /// CSV with true outcomes, row-aligned, reported alongside the predictions
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    truth_column: String,
    /// Output CSV (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FisherArgs {
    /// Loss: hinge, least-square, truncated-hinge:a, pinball:a, pinball-eps:eps,a,b,
    /// truncated-pinball:a,b. Repeatable. Default: hinge and pinball with a in {-0.1, -0.5, -1}
    #[arg(long = "loss", allow_hyphen_values = true)]
    losses: Vec<String>,
    /// Probabilities p; each is checked with q = 1 - p and swapped. Default 0.55, 0.60, ..., 0.95
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    /// Grid as zmin,zmax,step
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = vec![-3.0, 3.0, 1e-3])]
    grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn svm_code(e: &SvmError) -> u8 {
    match e {
        SvmError::Solver { .. } | SvmError::Invariant(_) => 3,
        SvmError::Qp(q) => qp_code(q),
        SvmError::Parameter(_) | SvmError::Kernel(_) | SvmError::Noise(_) => 1,
        _ => 2,
    }
}

fn qp_code(e: &QpError) -> u8 {
    match e {
        QpError::Parse(_) => 2,
        _ => 3,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<LossError>() || cause.is::<NoiseError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<SvmError>() {
            return svm_code(e);
        }
        if let Some(e) = cause.downcast_ref::<QpError>() {
            return qp_code(e);
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return match e {
                BenchError::Svm(s) => svm_code(s),
                BenchError::VerticalBoundary(_) | BenchError::AllCombinationsFailed(_) => 3,
                BenchError::Parameter(_) | BenchError::EmptyGrid(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<DataError>() || cause.is::<FairnessError>() || cause.is::<io::Error>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::SynthBench(a) => synth_bench(a),
        Command::Contaminate(a) => contaminate(a),
        Command::Fairness(a) => fairness_cmd(a),
        Command::FisherCheck(a) => fisher_check(a),
    }
}

fn is_csv(path: &Path, format: Format) -> bool {
    match format {
        Format::Csv => true,
        Format::Libsvm => false,
        Format::Auto => path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    }
}

fn load(input: &DataArgs) -> Result<Dataset> {
    load_path(&input.data, input.format, &input.label, &input.ignore)
}

fn load_path(path: &Path, format: Format, label: &str, ignore: &[String]) -> Result<Dataset> {
    let ds = if is_csv(path, format) {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        data::read_csv_ignoring(BufReader::new(file), label, ignore)
    } else {
        data::load_libsvm(path, None)
    };
    ds.with_context(|| format!("reading {}", path.display()))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn kernel(kind: KernelKind, gamma: Option<f64>) -> Result<KernelSpec> {
    match (kind, gamma) {
        (KernelKind::Linear, None) => Ok(KernelSpec::Linear),
        (KernelKind::Linear, Some(_)) => Err(usage("--gamma only applies to --kernel rbf")),
        (KernelKind::Rbf, Some(g)) => KernelSpec::rbf(g).map_err(|e| usage(e.to_string())),
        (KernelKind::Rbf, None) => Err(usage("--kernel rbf needs --gamma")),
    }
}

fn train_spec(a: &TrainArgs) -> Result<TrainSpec> {
    let kernel = kernel(a.kernel, a.gamma)?;
    let (family, dof) = a.noise.family()?;
    let feature_index = a.noise.feature()?;
    let need =
        |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("{} needs {flag}", a.model)));
    let spec = match a.model {
        Variant::CSvm => {
            if a.d.is_some() || a.alpha.is_some() {
                return Err(usage("c-svm takes --C only"));
            }
            TrainSpec {
                variant: a.model,
                penalty: need(a.c, "--C")?,
                kernel,
                level: None,
                noise: None,
                feature_index: None,
            }
        }
        Variant::SpSvm => {
            if a.d.is_some() {
                return Err(usage("sp-svm takes --C, not --D"));
            }
            let noise = NoiseSpec {
                family,
                dof,
                alpha_level: need(a.alpha, "--alpha")?,
            };
            noise.validate()?;
            TrainSpec {
                variant: a.model,
                penalty: need(a.c, "--C")?,
                kernel,
                level: None,
                noise: Some(noise),
                feature_index,
            }
        }
        Variant::EelSvm => {
            if a.c.is_some() {
                return Err(usage("eel-svm takes --D, not --C"));
            }
            let level = need(a.alpha, "--alpha")?;
            if !(0.0..1.0).contains(&level) {
                return Err(usage(format!(
                    "eel-svm --alpha must lie in [0, 1), got {level}"
                )));
            }
            TrainSpec {
                variant: a.model,
                penalty: need(a.d, "--D")?,
                kernel,
                level: Some(level),
                noise: None,
                feature_index: None,
            }
        }
    };
    if !(spec.penalty > 0.0 && spec.penalty.is_finite()) {
        return Err(usage(format!(
            "penalty must be positive, got {}",
            spec.penalty
        )));
    }
    Ok(spec)
}

fn train(a: TrainArgs) -> Result<()> {
    let spec = train_spec(&a)?;
    let raw = load(&a.input)?;
    if let Some(k) = spec.feature_index {
        if k >= raw.dim() {
            return Err(usage(format!(
                "--feature-index {k} out of range for {} features",
                raw.dim()
            )));
        }
    }
    let (ds, rescale) = if a.rescale {
        let (ds, p) = data::rescale_to_unit_range(&raw);
        (ds, Some(p))
    } else {
        (raw, None)
    };
    if let Some(path) = &a.dump_qp {
        let program = spec.dual_program(&ds)?;
        let mut w = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        qp::write_qp(&program, &mut w)?;
        w.flush()?;
    }
    let mut model = spec.train(&ds)?;
    if let Some(p) = rescale {
        model = model.with_rescale(p);
    }
    log::info!(
        "trained {} on {} rows, dual objective {:.6e}",
        model.variant,
        ds.len(),
        model.dual_objective
    );
    std::fs::write(&a.out, model.to_json()?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn read_model(path: &Path) -> Result<TrainedModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainedModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let (rows, labels): (Vec<Vec<f64>>, Option<Vec<f64>>) = match &a.label {
        Some(label) => {
            let ds = load_path(&a.data, a.format, label, &a.ignore)?;
            (
                ds.rows().map(<[f64]>::to_vec).collect(),
                Some(ds.labels().to_vec()),
            )
        }
        None if is_csv(&a.data, a.format) => {
            let file =
                File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?;
            let (_, rows) = data::read_csv_features(BufReader::new(file), &a.ignore)
                .with_context(|| format!("reading {}", a.data.display()))?;
            (rows, None)
        }
        None => {
            let ds = load_path(&a.data, a.format, "", &[])?;
            (ds.rows().map(<[f64]>::to_vec).collect(), None)
        }
    };
    let (pred, dec) = model.predict(&rows)?;
    let mut out = output(&a.out)?;
    match &labels {
        Some(_) => writeln!(out, "prediction,decision,label")?,
        None => writeln!(out, "prediction,decision")?,
    }
    for i in 0..pred.len() {
        match &labels {
            Some(y) => writeln!(out, "{},{:?},{}", pred[i], dec[i], y[i])?,
            None => writeln!(out, "{},{:?}", pred[i], dec[i])?,
        }
    }
    out.flush()?;
    if let Some(y) = labels {
        let hits = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
        eprintln!(
            "accuracy {:.6} ({hits}/{})",
            hits as f64 / y.len() as f64,
            y.len()
        );
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<TuningGrid> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text)
        .map_err(|e| BenchError::Config(e.to_string()))
        .with_context(|| format!("parsing {}", path.display()))
}

fn cv(a: CvArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(bench::DEFAULT_SEED);
    let (family, dof) = a.noise.family()?;
    let feature_index = a.noise.feature()?;
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    if a.snr_db.is_some_and(|s| !s.is_finite()) {
        return Err(usage("--snr-db must be finite"));
    }
    let grid = match (&a.grid, a.kernel) {
        (Some(p), _) => read_grid(p)?,
        (None, KernelKind::Rbf) => TuningGrid::real_data(a.model),
        (None, KernelKind::Linear) => TuningGrid::synthetic(a.model, 0.0),
    };
    let grid = match a.kernel {
        KernelKind::Linear if !grid.gamma.is_empty() => {
            return Err(usage("a linear kernel grid must not list gamma"))
        }
        KernelKind::Rbf if grid.gamma.is_empty() => {
            return Err(usage("an rbf grid needs gamma values"))
        }
        _ => grid,
    };
    let mut method = MethodSpec::new(a.model, grid);
    method.noise_family = family;
    method.noise_dof = dof;
    method.feature_index = feature_index;
    method.grid.candidates(a.model)?;

    let raw = load(&a.input)?;
    let raw = match a.snr_db {
        Some(snr) => bench::awgn(&raw, snr, bench::substream(seed, 3))?,
        None => raw,
    };
    let (ds, rescale) = if a.rescale {
        let (ds, p) = data::rescale_to_unit_range(&raw);
        (ds, Some(p))
    } else {
        (raw, None)
    };
    let result = bench::cross_validate(&ds, &method, a.folds, seed)?;
    log::info!(
        "best {} with mean accuracy {:.6}",
        result.best,
        result.best_accuracy
    );

    let mut out = output(&a.out)?;
    writeln!(out, "penalty,gamma,alpha,mean_accuracy,best")?;
    for (cand, score) in &result.scores {
        writeln!(
            out,
            "{:?},{},{},{},{}",
            cand.penalty,
            cand.gamma.map_or("NA".into(), |g| format!("{g:?}")),
            cand.level.map_or("NA".into(), |l| format!("{l:?}")),
            score.map_or("NA".into(), |s| format!("{s:?}")),
            u8::from(*cand == result.best)
        )?;
    }
    out.flush()?;

    if let Some(test_path) = &a.test {
        let test = load_path(test_path, a.input.format, &a.input.label, &a.input.ignore)?;
        let mut model = method.fit(&ds, &result.best)?;
        if let Some(p) = rescale {
            model = model.with_rescale(p);
        }
        eprintln!("test accuracy {:.6}", bench::accuracy(&model, &test)?);
    }
    Ok(())
}

fn synth_bench(a: SynthBenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)
        .with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = bench::run_synthetic_benchmark(&cfg)?;
    for row in &report.rows {
        if row.reps_failed > 0 {
            log::warn!(
                "{}: {} of {} repetitions failed",
                row.method,
                row.reps_failed,
                cfg.reps
            );
        }
    }
    let mut out = BufWriter::new(
        File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?,
    );
    report.write_csv(&mut out)?;
    out.flush()?;
    let mut timing_path = a.out.clone().into_os_string();
    timing_path.push(".timing.csv");
    let mut timing = BufWriter::new(File::create(&timing_path)?);
    report.write_timing_csv(&mut timing)?;
    timing.flush()?;
    Ok(())
}

fn contaminate(a: ContaminateArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(bench::DEFAULT_SEED);
    let family: ContaminationFamily = a
        .family
        .parse()
        .map_err(|e: BenchError| usage(e.to_string()))?;
    if a.ratio.is_none() && a.snr_db.is_none() && a.generate.is_none() {
        return Err(usage("nothing to do: give --ratio, --snr-db or --generate"));
    }
    if let Some(r) = a.ratio {
        if !(0.0..=1.0).contains(&r) {
            return Err(usage(format!("--ratio must lie in [0, 1], got {r}")));
        }
    }
    if a.snr_db.is_some_and(|s| !s.is_finite()) {
        return Err(usage("--snr-db must be finite"));
    }
    let mut ds = match (&a.data, a.generate) {
        (Some(path), None) => load_path(path, a.format, &a.label, &[])?,
        (None, Some(n)) => bench::gen_synthetic(&bench::SyntheticSpec::new(n, seed))
            .map_err(|e| usage(e.to_string()))?,
        _ => return Err(usage("give exactly one of --data and --generate")),
    };
    if let Some(r) = a.ratio {
        ds = bench::contaminate_synthetic(
            &ds,
            &ContaminationSpec::new(r, family, bench::substream(seed, 1)),
        )?;
    }
    if let Some(snr) = a.snr_db {
        ds = bench::awgn(&ds, snr, bench::substream(seed, 3))?;
    }
    let mut out = output(&a.out)?;
    data::write_csv(&ds, &a.label, &mut out)?;
    out.flush()?;
    Ok(())
}

fn read_column(path: &Path, column: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| DataError::MissingLabelColumn(column.to_owned()))
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        out.push(rec.get(idx).unwrap_or("").to_owned());
    }
    Ok(out)
}

fn outcomes(raw: &[String], path: &Path) -> Result<Vec<f64>> {
    raw.iter()
        .enumerate()
        .map(|(i, v)| match v.parse::<f64>() {
            Ok(x) if x == 1.0 || x == -1.0 => Ok(x),
            _ => Err(DataError::InvalidLabel {
                line: i + 2,
                value: v.clone(),
            })
            .with_context(|| format!("reading {}", path.display())),
        })
        .collect()
}

fn fairness_cmd(a: FairnessArgs) -> Result<()> {
    let strata_path = a.strata_file.as_ref().unwrap_or(&a.predictions);
    let strata = read_column(strata_path, &a.strata_column)?;
    let mut sources = vec![("predicted", a.predictions.clone(), a.outcome_column.clone())];
    if let Some(t) = &a.truth {
        sources.push(("true", t.clone(), a.truth_column.clone()));
    }
    let mut out = output(&a.out)?;
    writeln!(out, "source,stratum,count,denial_rate,disparity,cdd")?;
    for (name, path, column) in sources {
        let y = outcomes(&read_column(&path, &column)?, &path)?;
        let table = if a.levels.is_empty() {
            StratifiedOutcome::new(strata.clone(), y)
        } else {
            StratifiedOutcome::with_levels(strata.clone(), y, a.levels.clone())
        }
        .with_context(|| format!("pairing {} with the strata", path.display()))?;
        let report = fairness::fairness_report(&table)?;
        report.write_csv(name, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn fisher_check(a: FisherArgs) -> Result<()> {
    let specs: Vec<(String, LossSpec)> = if a.losses.is_empty() {
        ["hinge", "pinball:-0.1", "pinball:-0.5", "pinball:-1"]
            .iter()
            .map(|s| (s.to_string(), s.parse().expect("built-in loss")))
            .collect()
    } else {
        a.losses
            .iter()
            .map(|s| Ok((s.clone(), s.parse::<LossSpec>()?)))
            .collect::<Result<_>>()?
    };
    let ps = if a.p.is_empty() {
        (0..9).map(|i| 0.55 + 0.05 * i as f64).collect()
    } else {
        a.p.clone()
    };
    let grid = match a.grid.as_slice() {
        [lo, hi, step] => (*lo, *hi, *step),
        _ => return Err(usage("--grid takes zmin,zmax,step")),
    };
    let mut out = output(&a.out)?;
    writeln!(out, "loss,p,q,argmin,sign_matches")?;
    for (name, spec) in &specs {
        for &p in &ps {
            for (pp, qq) in [(p, 1.0 - p), (1.0 - p, p)] {
                let z = losses::fisher_argmin(spec, pp, qq, grid)?;
                let ok = z.signum() == (pp - qq).signum() && z != 0.0;
                writeln!(out, "\"{name}\",{pp:.4},{qq:.4},{z:?},{}", u8::from(ok))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
