//! Command-line front end. Machine-readable output goes to stdout,
//! diagnostics to stderr.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 training divergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::arch::{self, count_params, smallfirenet_published_params, NetworkSpec};
use crate::bench::{self, BenchConfig, BenchReport};
use crate::dataset::{self, DatasetSplit, Manifest};
use crate::error::{Error, Result};
use crate::layers::BnMode;
use crate::model::Model;
use crate::store;
use crate::train::{self, BatchMetrics, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "tinycnn",
    version,
    about = "Micro-CNN engine for 96x96 grayscale image classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the per-layer parameter and FLOP report of an architecture.
    Build(ArchArgs),
    /// Train a model and write it to a model file.
    Train(TrainArgs),
    /// Stratified k-fold evaluation; prints mean and std accuracy.
    Eval(EvalArgs),
    /// Classify one 96x96 graymap.
    Predict(PredictArgs),
    /// Measure single-core inference latency.
    Bench(BenchArgs),
    /// Write the descriptor text of an architecture or model file.
    Export(ExportArgs),
    /// Validate a model file and summarize its contents.
    ImportCheck(ImportCheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BnModeArg {
    Width,
    Channel,
}

impl From<BnModeArg> for BnMode {
    fn from(m: BnModeArg) -> Self {
        match m {
            BnModeArg::Width => BnMode::WidthAxis,
            BnModeArg::Channel => BnMode::ChannelAxis,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ArchArgs {
    /// tinynet, smallfirenet, fire-baseline, baseline-cnn, or a descriptor file.
    #[arg(long)]
    arch: String,
    /// Module count (default 5 for tinynet, 3 for smallfirenet).
    #[arg(long)]
    n: Option<usize>,
    /// Filters per Tiny block.
    #[arg(long, default_value_t = 4)]
    filters: usize,
    #[arg(long, default_value_t = 11)]
    classes: usize,
    #[arg(long, value_enum)]
    bn_mode: Option<BnModeArg>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Directory with one subdirectory of graymaps per class.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// `name,index` class manifest for --data.
    #[arg(long, requires = "data")]
    manifest: Option<PathBuf>,
    /// Generate N synthetic images per class instead of loading --data.
    #[arg(long)]
    synthetic: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct HyperArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// ADAM learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Metrics CSV path; stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, conflicts_with_all = ["model", "suite"])]
    arch: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 4)]
    filters: usize,
    #[arg(long, default_value_t = 11)]
    classes: usize,
    #[arg(long, value_enum)]
    bn_mode: Option<BnModeArg>,
    /// Benchmark a saved model instead of a freshly initialized one.
    #[arg(long, conflicts_with = "suite")]
    model: Option<PathBuf>,
    /// Benchmark the five headline networks and compare against the baseline CNN.
    #[arg(long)]
    suite: bool,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Report CSV whose first row is the speedup reference.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, conflicts_with = "model")]
    arch: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 4)]
    filters: usize,
    #[arg(long, default_value_t = 11)]
    classes: usize,
    #[arg(long, value_enum)]
    bn_mode: Option<BnModeArg>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ImportCheckArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Build(a) => cmd_build(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Export(a) => cmd_export(&a),
        Command::ImportCheck(a) => cmd_import_check(&a),
    }
}

fn resolve_arch(a: &ArchArgs) -> Result<NetworkSpec> {
    let path = Path::new(&a.arch);
    let spec = if path.is_file() {
        store::parse_descriptor(&fs::read_to_string(path)?)?
    } else {
        let n = a.n.unwrap_or(match a.arch.as_str() {
            "smallfirenet" => 3,
            _ => 5,
        });
        let known = [
            "tinynet",
            "smallfirenet",
            "fire-baseline",
            "fire_baseline",
            "baseline-cnn",
            "baseline_cnn",
        ];
        if !known.contains(&a.arch.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown architecture {:?} (expected one of tinynet, smallfirenet, fire-baseline, baseline-cnn, or a descriptor file)",
                a.arch
            )));
        }
        arch::by_name(&a.arch, n, a.filters, a.classes)?
    };
    match a.bn_mode {
        Some(m) => spec.with_bn_mode(m.into()),
        None => Ok(spec),
    }
}

fn cmd_build(a: &ArchArgs) -> Result<()> {
    let spec = resolve_arch(a)?;
    let report = count_params(&spec);
    println!("{report}");
    if let Some(n) = spec.name.strip_prefix("smallfirenet-").and_then(|n| n.parse().ok()) {
        if let Some(published) = smallfirenet_published_params(n) {
            let conv_only = report.total_params();
            println!("published total: {published}");
            println!(
                "residual: {} (unexplained normalization parameters)",
                published as i64 - conv_only as i64
            );
        }
    }
    Ok(())
}

/// Checks the data flags and returns the dataset; never touches the
/// filesystem before the flags are known to be consistent.
fn load_data(d: &DataArgs, seed: u64) -> Result<DatasetSplit> {
    match (&d.data, d.synthetic) {
        (Some(dir), None) => {
            if !dir.is_dir() {
                return Err(Error::Dataset(format!(
                    "data directory {} does not exist",
                    dir.display()
                )));
            }
            let manifest = d.manifest.as_deref().map(Manifest::from_file).transpose()?;
            dataset::load_directory(dir, manifest.as_ref())
        }
        (None, Some(n)) => {
            if n == 0 {
                return Err(Error::InvalidConfig(
                    "--synthetic needs at least 1 image per class".into(),
                ));
            }
            Ok(dataset::synth_generate(n, seed))
        }
        _ => Err(Error::InvalidConfig(
            "exactly one of --data or --synthetic is required".into(),
        )),
    }
}

fn train_config(h: &HyperArgs, spec: &NetworkSpec) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        learning_rate: h.lr,
        epochs: h.epochs,
        batch_size: h.batch,
        seed: h.seed,
        bn_mode: spec.bn_mode,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let spec = resolve_arch(&a.arch)?;
    let cfg = train_config(&a.hyper, &spec)?;
    let data = load_data(&a.data, cfg.seed)?;
    eprintln!(
        "run: arch={} alpha={} epochs={} batch={} seed={} images={}",
        spec.name,
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.seed,
        data.train.len()
    );
    let mut sink: Box<dyn Write> = match &a.metrics {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "{}", train::BatchMetrics::CSV_HEADER)?;
    let mut io_err = None;
    let outcome = train::train_with(&spec, &data.train, &cfg, |m: &BatchMetrics| {
        if io_err.is_none() {
            if let Err(e) = writeln!(sink, "{}", m.csv_row()) {
                io_err = Some(e);
            }
        }
    });
    sink.flush()?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let outcome = outcome?;
    if let Some(last) = outcome.epochs.last() {
        eprintln!("final epoch: loss={:.4} accuracy={:.4}", last.loss, last.accuracy);
    }
    store::save_model(&outcome.model, &a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let spec = resolve_arch(&a.arch)?;
    let cfg = train_config(&a.hyper, &spec)?;
    let data = load_data(&a.data, cfg.seed)?;
    eprintln!(
        "eval: arch={} folds={} alpha={} epochs={} batch={} seed={}",
        spec.name, a.folds, cfg.learning_rate, cfg.epochs, cfg.batch_size, cfg.seed
    );
    let report = train::kfold_evaluate(&spec, &data, a.folds, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for (i, (acc, n)) in report.fold_accuracies.iter().zip(&report.fold_sizes).enumerate() {
        println!("fold {i}: accuracy {:.4} ({n} images)", acc);
    }
    println!("accuracy: {:.2} ± {:.2} %", report.mean * 100.0, report.std * 100.0);
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = store::load_model(&a.model)?;
    let pixels = dataset::read_input_image(&a.image)?;
    let probs = model.predict(&pixels)?;
    let p = probs.data();
    println!("class {}", crate::tensor::argmax(p));
    let row: Vec<String> = p.iter().map(|v| format!("{v:.8}")).collect();
    println!("probabilities {}", row.join(","));
    Ok(())
}

const SUITE: [(&str, usize, usize); 5] = [
    ("tinynet", 5, 4),
    ("tinynet", 5, 8),
    ("smallfirenet", 3, 0),
    ("fire-baseline", 0, 0),
    ("baseline-cnn", 0, 0),
];

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        warmup: a.warmup,
        runs: a.runs,
    };
    if cfg.runs == 0 {
        return Err(Error::InvalidConfig("--runs must be >= 1".into()));
    }
    let reference = match &a.against {
        Some(p) => Some(bench::parse_report_csv(&fs::read_to_string(p)?)?.remove(0)),
        None => None,
    };
    bench::ensure_single_thread()?;
    if a.suite {
        let mut reports = Vec::new();
        for (name, n, filters) in SUITE {
            let spec = arch::by_name(name, n, filters, a.classes)?;
            eprintln!("benchmarking {}", spec.name);
            reports.push(bench::bench_spec(&spec, cfg)?);
        }
        let cmp = bench::compare(&reports, "baseline-cnn")?;
        match a.format {
            Format::Csv => print!("{}", cmp.to_csv()),
            Format::Text => print!("{cmp}"),
        }
        return Ok(());
    }
    let model = match (&a.model, &a.arch) {
        (Some(p), None) => store::load_model(p)?,
        (None, Some(name)) => {
            let args = ArchArgs {
                arch: name.clone(),
                n: a.n,
                filters: a.filters,
                classes: a.classes,
                bn_mode: a.bn_mode,
            };
            Model::init(&resolve_arch(&args)?, 0)
        }
        _ => {
            return Err(Error::InvalidConfig(
                "one of --arch, --model or --suite is required".into(),
            ))
        }
    };
    let report = bench::bench(&model, cfg)?;
    emit_bench(&report, reference.as_ref(), a.format);
    Ok(())
}

fn emit_bench(report: &BenchReport, reference: Option<&bench::CsvRow>, format: Format) {
    match format {
        Format::Csv => print!("{}", bench::report_csv(report, reference.map(|r| r.mean_ms))),
        Format::Text => {
            println!("{report}");
            if let Some(r) = reference {
                println!("speedup vs {}: {:.2}", r.name, r.mean_ms / report.mean_ms);
            }
        }
    }
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let spec = match (&a.model, &a.arch) {
        (Some(p), None) => store::load(p)?.0,
        (None, Some(name)) => resolve_arch(&ArchArgs {
            arch: name.clone(),
            n: a.n,
            filters: a.filters,
            classes: a.classes,
            bn_mode: a.bn_mode,
        })?,
        _ => return Err(Error::InvalidConfig("one of --arch or --model is required".into())),
    };
    let text = store::to_descriptor(&spec);
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_import_check(a: &ImportCheckArgs) -> Result<()> {
    let (spec, params) = store::load(&a.model)?;
    let model = Model::from_parts(&spec, params)?;
    let trainable: usize = model.params().trainable_count();
    println!("name {}", spec.name);
    println!("blobs {}", model.params().len());
    println!("trainable_params {trainable}");
    println!("classes {}", spec.classes);
    for p in model.params().iter() {
        let dims: Vec<String> = p.dims.iter().map(|d| d.to_string()).collect();
        println!("blob {} {}", p.name, dims.join("x"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["tinycnn", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["tinycnn", "build"]), EXIT_USAGE);
        assert_eq!(run(["tinycnn", "build", "--arch", "resnet"]), EXIT_USAGE);
        assert_eq!(run(["tinycnn", "build", "--arch", "tinynet", "--n", "9"]), EXIT_USAGE);
    }

    #[test]
    fn build_succeeds() {
        assert_eq!(
            run(["tinycnn", "build", "--arch", "tinynet", "--filters", "4", "--n", "5"]),
            EXIT_OK
        );
    }

    #[test]
    fn divergence_maps_to_three() {
        assert_eq!(exit_code(&Error::Divergence { epoch: 0, batch: 0 }), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::Dataset("x".into())), EXIT_USAGE);
    }
}
