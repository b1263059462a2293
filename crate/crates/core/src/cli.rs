//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 missing or unreadable
//! environment/data, 3 numeric divergence, 64 usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{encode, load_checkpoint, save_checkpoint};
use crate::data::{load_mnist, resolve_data_dir, Dataset};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::export::export_masks;
use crate::grad::{grad_check_report, random_grad_check_case};
use crate::manifest::{git_blob_hash, parse_key_values, parse_value, RunManifest};
use crate::optics::{Model, DEFAULT_ACTIVATION_SHIFT, NUM_CLASSES};
use crate::training::{evaluate, train_epoch, MetricsRecord, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ENVIRONMENT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Largest grid `grad-check` accepts; cost grows as O(N^4 log N).
pub const GRAD_CHECK_MAX_GRID: usize = 16;
/// `grad-check` passes when the maximum relative error is below this.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "conn", version, about = "Free-space convolutional optical neural network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on MNIST and write metrics, checkpoints and a run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an MNIST split.
    Eval(EvalArgs),
    /// Write per-layer W, B and θ rasters with PGM previews.
    ExportMasks(ExportArgs),
    /// Throughput and FLOPs per joule of an optical stack.
    EnergyReport(EnergyArgs),
    /// Compare analytic gradients with central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Activation turning point.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Worker threads; 1 is the deterministic mode, 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Train on only the first N training digits.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Validate on only the first N validation digits.
    #[arg(long)]
    pub val_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub checkpoint: Option<PathBuf>,
    /// Run manifest naming the checkpoint to evaluate.
    #[arg(long, conflicts_with = "checkpoint")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Evaluate only the first N digits of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long, default_value_t = 3)]
    pub layers: u64,
    #[arg(long, default_value_t = 512)]
    pub grid: u64,
    /// Clock rate in Hz.
    #[arg(long)]
    pub clock: f64,
    /// Total optical power in W.
    #[arg(long)]
    pub power: f64,
    /// Total node count, overriding layers * grid^2.
    #[arg(long)]
    pub nodes: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = DEFAULT_ACTIVATION_SHIFT)]
    pub shift: f64,
}

/// Maps a library error onto the exit-code convention.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Diverged { .. } => EXIT_NUMERIC,
        _ => EXIT_ENVIRONMENT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::ExportMasks(a) => cmd_export_masks(&a, out),
        Command::EnergyReport(a) => cmd_energy_report(&a, out),
        Command::GradCheck(a) => cmd_grad_check(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let Error::MissingData { .. } = e {
                let _ = writeln!(
                    err,
                    "point --data-dir or ${} at a directory holding the four MNIST IDX files",
                    crate::data::DATA_DIR_ENV
                );
            }
            exit_code_for(&e)
        }
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Training settings assembled from an optional config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub config: TrainConfig,
    pub data_dir: Option<PathBuf>,
    pub threads: usize,
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
}

impl TrainSettings {
    pub fn from_args(args: &TrainArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                parse_key_values(&text)?
            }
            None => Default::default(),
        };
        let defaults = TrainConfig::default();
        fn pick<T: std::str::FromStr + Clone>(
            flag: &Option<T>,
            file: &std::collections::BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>> {
            match flag {
                Some(v) => Ok(Some(v.clone())),
                None => parse_value(file, key),
            }
        }
        let config = TrainConfig {
            learning_rate: pick(&args.learning_rate, &file, "learning_rate")?.unwrap_or(defaults.learning_rate),
            batch_size: pick(&args.batch_size, &file, "batch_size")?.unwrap_or(defaults.batch_size),
            epochs: pick(&args.epochs, &file, "epochs")?.unwrap_or(defaults.epochs),
            seed: pick(&args.seed, &file, "seed")?.unwrap_or(defaults.seed),
            grid_size: pick(&args.grid, &file, "grid_size")?.unwrap_or(defaults.grid_size),
            layers: pick(&args.layers, &file, "layers")?.unwrap_or(defaults.layers),
            activation_shift: pick(&args.shift, &file, "activation_shift")?.unwrap_or(defaults.activation_shift),
            checkpoint_path: pick(&args.checkpoint, &file, "checkpoint_path")?.unwrap_or(defaults.checkpoint_path),
            metrics_path: pick(&args.metrics, &file, "metrics_path")?.unwrap_or(defaults.metrics_path),
        };
        config.validate()?;
        if config.grid_size < crate::data::MIN_EMBED_GRID {
            return Err(Error::Config(format!(
                "grid must be at least {} to embed MNIST digits",
                crate::data::MIN_EMBED_GRID
            )));
        }
        Ok(TrainSettings {
            config,
            data_dir: pick(&args.data_dir, &file, "data_dir")?,
            threads: pick(&args.threads, &file, "threads")?.unwrap_or(0),
            train_limit: pick(&args.train_limit, &file, "train_limit")?,
            val_limit: pick(&args.val_limit, &file, "val_limit")?,
        })
    }
}

/// `model.ckpt` -> `model.best.ckpt`.
pub fn best_checkpoint_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.best.{}", ext.to_string_lossy()),
        None => format!("{stem}.best"),
    };
    path.with_file_name(name)
}

/// `model.ckpt` -> `model.manifest`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn limit(dataset: Dataset, n: Option<usize>) -> Dataset {
    match n {
        Some(n) => dataset.truncated(n),
        None => dataset,
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let settings = TrainSettings::from_args(args)?;
    let config = &settings.config;
    let data_dir = resolve_data_dir(settings.data_dir.as_deref());
    let splits = load_mnist(&data_dir)?;
    let train = limit(splits.train, settings.train_limit);
    let validation = limit(splits.validation, settings.val_limit);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config("training and validation limits must be positive".into()));
    }
    // Wall-clock time is the only nondeterministic output; the deterministic
    // mode records it in the manifest only.
    let deterministic = settings.threads == 1;
    let start_unix = unix_now();

    let metrics_path = &config.metrics_path;
    if let Some(parent) = metrics_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let mut metrics = BufWriter::new(File::create(metrics_path).map_err(|e| Error::file(metrics_path, e))?);
    writeln!(metrics, "{}", MetricsRecord::CSV_HEADER)?;
    metrics.flush()?;

    let best_path = best_checkpoint_path(&config.checkpoint_path);
    let mut model = Model::initialize(config.grid_size, config.layers, config.activation_shift, config.seed)?;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut last = None;
    for epoch in 1..=config.epochs {
        let result = with_threads(settings.threads, || train_epoch(model.clone(), &train, &validation, config, epoch))?;
        let (next, mut record) = match result {
            Ok(r) => r,
            Err(Error::Diverged { epoch, batch }) => {
                writeln!(out, "numeric divergence at epoch {epoch}, batch {batch}")?;
                return Err(Error::Diverged { epoch, batch });
            }
            Err(e) => return Err(e),
        };
        model = next;
        if deterministic {
            record.wall_seconds = 0.0;
        }
        writeln!(metrics, "{}", record.csv_row())?;
        metrics.flush()?;
        writeln!(
            out,
            "epoch {epoch}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4}",
            record.train_loss, record.train_accuracy, record.val_loss, record.val_accuracy
        )?;
        if record.val_accuracy > best_accuracy {
            best_accuracy = record.val_accuracy;
            save_checkpoint(&model, &best_path)?;
        }
        last = Some(record);
    }
    save_checkpoint(&model, &config.checkpoint_path)?;
    let best_bytes = fs::read(&best_path).map_err(|e| Error::file(&best_path, e))?;
    let manifest = RunManifest {
        config: config.clone(),
        threads: settings.threads,
        checkpoint_hash: git_blob_hash(&encode(&model)),
        best_checkpoint_path: best_path,
        best_checkpoint_hash: git_blob_hash(&best_bytes),
        start_unix,
        end_unix: unix_now(),
        final_metrics: last.expect("at least one epoch ran"),
    };
    let manifest_file = manifest_path(&config.checkpoint_path);
    manifest.write(&manifest_file)?;
    writeln!(out, "checkpoint {}", config.checkpoint_path.display())?;
    writeln!(out, "manifest {}", manifest_file.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let checkpoint = match (&args.checkpoint, &args.manifest) {
        (Some(path), _) => path.clone(),
        (None, Some(manifest)) => RunManifest::read(manifest)?.config.checkpoint_path,
        (None, None) => return Err(Error::Config("--checkpoint or --manifest is required".into())),
    };
    let model = load_checkpoint(&checkpoint)?;
    let splits = load_mnist(&resolve_data_dir(args.data_dir.as_deref()))?;
    let dataset = match args.split {
        SplitArg::Train => splits.train,
        SplitArg::Validation => splits.validation,
        SplitArg::Test => splits.test,
    };
    let dataset = limit(dataset, args.limit);
    let eval = with_threads(args.threads, || evaluate(&model, &dataset))??;
    match args.format {
        OutputFormat::Csv => {
            writeln!(out, "record,true_label,predicted_label,count,mean_loss,accuracy")?;
            writeln!(out, "summary,,,{},{},{}", eval.count, eval.mean_loss, eval.accuracy)?;
            for t in 0..NUM_CLASSES {
                for p in 0..NUM_CLASSES {
                    writeln!(out, "confusion,{t},{p},{},,", eval.confusion[t][p])?;
                }
            }
        }
        OutputFormat::Text => {
            writeln!(out, "samples   {}", eval.count)?;
            writeln!(out, "mean_loss {:.6}", eval.mean_loss)?;
            writeln!(out, "accuracy  {:.4}", eval.accuracy)?;
            writeln!(out, "confusion (rows: true label, columns: predicted)")?;
            write!(out, "     ")?;
            for p in 0..NUM_CLASSES {
                write!(out, "{p:>6}")?;
            }
            writeln!(out)?;
            for (t, row) in eval.confusion.iter().enumerate() {
                write!(out, "{t:>4} ")?;
                for count in row {
                    write!(out, "{count:>6}")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_export_masks(args: &ExportArgs, out: &mut dyn Write) -> Result<i32> {
    let model = load_checkpoint(&args.checkpoint)?;
    for path in export_masks(&model, &args.out_dir)? {
        writeln!(out, "{}", path.display())?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_energy_report(args: &EnergyArgs, out: &mut dyn Write) -> Result<i32> {
    let report = EnergyReport::new(args.layers, args.grid, args.clock, args.power, args.nodes)?;
    writeln!(out, "{report}")?;
    Ok(EXIT_OK)
}

pub fn cmd_grad_check(args: &GradCheckArgs, out: &mut dyn Write) -> Result<i32> {
    if args.grid > GRAD_CHECK_MAX_GRID {
        return Err(Error::Config(format!(
            "grad-check needs two loss evaluations per parameter ({} parameters per layer at grid {}); \
             grids above {GRAD_CHECK_MAX_GRID} are too slow",
            3 * args.grid * args.grid,
            args.grid
        )));
    }
    if args.layers == 0 {
        return Err(Error::Config("layers must be at least 1".into()));
    }
    if args.step.is_nan() || args.step <= 0.0 || args.shift.is_nan() || args.shift < 0.0 {
        return Err(Error::Config("step must be positive and shift non-negative".into()));
    }
    let case = random_grad_check_case(args.grid, args.layers, args.shift, args.seed, args.step)
        .map_err(|e| match e {
            Error::Shape(m) | Error::Layout(m) => Error::Config(m),
            other => other,
        })?;
    let report = grad_check_report(&case.model, &case.input, case.label, args.step)?;
    writeln!(out, "parameters    {}", report.checked)?;
    writeln!(out, "max_rel_error {:e}", report.max_rel_error)?;
    if let Some(id) = report.worst {
        writeln!(out, "worst         layer {} {} cell {}", id.layer, id.kind.name(), id.index)?;
    }
    let pass = report.max_rel_error < GRAD_CHECK_TOLERANCE;
    writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
    Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}
