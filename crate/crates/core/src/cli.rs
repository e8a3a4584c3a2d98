//! Command-line interface: `train`, `evaluate`, `predict`, `sweep` and `inspect`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::datasets::{self, DatasetError, DelimitedOptions, LabelDictionary, LabeledDataset};
use crate::model::{ModelConfig, ModelError};
use crate::parallel::Parallelism;
use crate::persistence::{self, PersistError, SizeReport};
use crate::pipeline::{self, TrainOptions, DEFAULT_HOLDOUT};
use crate::sweep::{self, SweepError, SweepGrid, SweepOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "bthowen", version, about = "Weightless neural networks with counting Bloom filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model, choose its bleaching threshold and save it binarized.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a saved model on a labeled set.
    Evaluate(EvaluateArgs),
    /// Print the predicted class index of every input row.
    Predict(PredictArgs),
    /// Train and score every point of a hyperparameter grid.
    Sweep(SweepArgs),
    /// Print a saved model's configuration and size.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    Idx,
    Delimited,
}

/// Which column holds the class: an index, `last` or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
    None,
}

impl FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "last" => Ok(LabelColumn::Last),
            "none" => Ok(LabelColumn::None),
            _ => s
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| format!("expected a column index, `last` or `none`, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "delimited")]
    pub dataset_format: DatasetFormat,
    /// Delimited table, or IDX image file.
    #[arg(long)]
    pub data: PathBuf,
    /// IDX label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Column delimiter of delimited tables.
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Whether delimited tables start with a header row.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub has_header: bool,
    /// Class column of delimited tables: an index, `last` or `none`.
    #[arg(long)]
    pub label_column: Option<LabelColumn>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Held-out test set in the same format as --data.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// IDX label file for --test-data.
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Without --test-data, carve this fraction of --data off as a seeded test split.
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long)]
    pub bits_per_input: Option<usize>,
    #[arg(long)]
    pub inputs_per_filter: Option<usize>,
    #[arg(long)]
    pub entries: Option<usize>,
    #[arg(long)]
    pub hashes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the training data used to choose the bleaching threshold.
    #[arg(long, default_value_t = DEFAULT_HOLDOUT)]
    pub holdout: f64,
    /// File of `key=value` lines with keys t, n, entries, k and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub test: TestArgs,
    /// Dataset name written to the results file.
    #[arg(long, default_value = "data")]
    pub dataset_name: String,
    /// Start from a built-in grid; axis flags replace its axes.
    #[arg(long, value_parser = ["mnist"])]
    pub grid: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub bits_per_input: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub inputs_per_filter: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub entries: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub hashes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = DEFAULT_HOLDOUT)]
    pub holdout: f64,
    /// Write 0 for every point's wall time so reruns give identical files.
    #[arg(long)]
    pub no_timing: bool,
    /// Only count the grid points.
    #[arg(long)]
    pub dry_run: bool,
    /// Results file; existing rows are kept and their points skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train(args, out),
        Command::Evaluate(args) => evaluate(args, out),
        Command::Predict(args) => predict(args, out),
        Command::Sweep(args) => run_sweep(args, out),
        Command::Inspect(args) => {
            let model = persistence::load(&args.model)?;
            write!(out, "{}", persistence::inspect(&model))?;
            Ok(())
        }
    }
}

fn delimiter(c: char) -> Result<u8, CliError> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| CliError::Usage(format!("delimiter must be a single ASCII character, got {c:?}")))
}

fn delimited_options(args: &DataArgs, default: LabelColumn) -> Result<(DelimitedOptions, LabelColumn), CliError> {
    let column = args.label_column.unwrap_or(default);
    let options = DelimitedOptions {
        delimiter: delimiter(args.delimiter)?,
        has_header: args.has_header,
        label_column: match column {
            LabelColumn::Index(i) => Some(i),
            _ => None,
        },
    };
    Ok((options, column))
}

fn load_labeled(
    args: &DataArgs,
    data: &Path,
    labels: Option<&Path>,
    dictionary: Option<&LabelDictionary>,
) -> Result<LabeledDataset, CliError> {
    match args.dataset_format {
        DatasetFormat::Idx => {
            let labels = labels.ok_or_else(|| CliError::Usage("IDX data needs a label file".into()))?;
            Ok(datasets::load_idx(data, labels)?)
        }
        DatasetFormat::Delimited => {
            let (options, column) = delimited_options(args, LabelColumn::Last)?;
            if column == LabelColumn::None {
                return Err(CliError::Usage("a labeled set needs a label column".into()));
            }
            Ok(datasets::load_delimited(data, &options, dictionary)?)
        }
    }
}

/// Training data and optional test data.
fn load_train_test(data: &DataArgs, test: &TestArgs, seed: u64) -> Result<(LabeledDataset, Option<LabeledDataset>), CliError> {
    let train = load_labeled(data, &data.data, data.labels.as_deref(), None)?;
    match (&test.test_data, test.test_fraction) {
        (Some(path), _) => {
            let test_set = load_labeled(data, path, test.test_labels.as_deref(), Some(train.dictionary()))?;
            Ok((train, Some(test_set)))
        }
        (None, Some(f)) if f > 0.0 && f < 1.0 => {
            let (a, b) = train.split(1.0 - f, seed);
            Ok((a, Some(b)))
        }
        (None, Some(f)) => Err(CliError::Usage(format!("test fraction must be in (0, 1), got {f}"))),
        (None, None) => Ok((train, None)),
    }
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>, CliError> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim();
        const KEYS: [&str; 6] = ["dataset", "t", "n", "entries", "k", "seed"];
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn setting<T: FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str, name: &str) -> Result<T, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("config value {key}={v:?} is not valid"))),
        None => Err(CliError::Usage(format!("missing --{name}"))),
    }
}

fn train(args: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => parse_config_file(&fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.clone(),
            source,
        })?)?,
        None => HashMap::new(),
    };
    let t = setting(args.bits_per_input, &file, "t", "bits-per-input")?;
    let n = setting(args.inputs_per_filter, &file, "n", "inputs-per-filter")?;
    let entries = setting(args.entries, &file, "entries", "entries")?;
    let k = setting(args.hashes, &file, "k", "hashes")?;
    let seed = match args.seed {
        Some(seed) => seed,
        None if file.contains_key("seed") => setting(None, &file, "seed", "seed")?,
        None => 0,
    };

    // Reject a bad configuration before reading any data.
    let mut shape = ModelConfig {
        feature_count: 1,
        class_count: 2,
        bits_per_input: t,
        inputs_per_filter: n,
        entries_per_filter: entries,
        hashes_per_filter: k,
        seed,
    };
    shape.validate()?;

    let (train_set, test_set) = load_train_test(&args.data, &args.test, seed)?;
    shape = pipeline::config_for(&train_set, t, n, entries, k, seed);
    let trained = pipeline::train(
        shape,
        &train_set,
        TrainOptions {
            holdout: args.holdout,
            parallelism: Parallelism::default(),
        },
    )?;
    persistence::save(&trained.binarized, &args.model)?;
    writeln!(out, "b={}", trained.selection.b)?;
    writeln!(out, "validation_accuracy={:.6}", trained.selection.accuracy)?;
    if let Some(test_set) = &test_set {
        writeln!(out, "test_accuracy={:.6}", trained.binarized.evaluate(test_set, None)?)?;
    }
    writeln!(out, "size_kib={}", SizeReport::of(&trained.binarized).kib())?;
    writeln!(out, "model={}", args.model.display())?;
    Ok(())
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = persistence::load(&args.model)?;
    let data = load_labeled(&args.data, &args.data.data, args.data.labels.as_deref(), Some(model.labels()))?;
    let confusion = model.confusion(&data, None)?;
    let correct: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    if data.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    writeln!(out, "accuracy={:.6}", correct as f64 / data.len() as f64)?;
    writeln!(out, "samples={}", data.len())?;
    writeln!(out, "confusion (rows true, columns predicted):")?;
    for row in confusion {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

fn predict(args: PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = persistence::load(&args.model)?;
    let (flat, width) = match args.data.dataset_format {
        DatasetFormat::Idx => datasets::load_idx_images(&args.data.data)?,
        DatasetFormat::Delimited => {
            let (options, column) = delimited_options(&args.data, LabelColumn::None)?;
            let rows = datasets::load_features(&args.data.data, &options, column == LabelColumn::Last)?;
            let width = rows.first().map_or(model.config().feature_count, Vec::len);
            (rows.concat(), width)
        }
    };
    if flat.is_empty() {
        return Ok(());
    }
    let rows: Vec<&[f64]> = flat.chunks_exact(width.max(1)).collect();
    let predictions = model.predict_rows(&rows, None, width)?;
    for p in predictions {
        writeln!(out, "{p}")?;
    }
    Ok(())
}

fn run_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut grid = match args.grid.as_deref() {
        Some("mnist") => SweepGrid::mnist(args.seed),
        _ => SweepGrid {
            dataset: String::new(),
            bits_per_input: Vec::new(),
            inputs_per_filter: Vec::new(),
            entries_per_filter: Vec::new(),
            hashes_per_filter: Vec::new(),
            seed: args.seed,
        },
    };
    grid.dataset = args.dataset_name.clone();
    for (axis, values) in [
        (&mut grid.bits_per_input, &args.bits_per_input),
        (&mut grid.inputs_per_filter, &args.inputs_per_filter),
        (&mut grid.entries_per_filter, &args.entries),
        (&mut grid.hashes_per_filter, &args.hashes),
    ] {
        if !values.is_empty() {
            *axis = values.clone();
        }
    }
    grid.validate()?;
    if args.dry_run {
        writeln!(out, "points={}", grid.points().len())?;
        return Ok(());
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let (train_set, test_set) = load_train_test(&args.data, &args.test, args.seed)?;
    let options = SweepOptions {
        workers: args.workers,
        timing: !args.no_timing,
        holdout: args.holdout,
        results: Some(args.out.clone()),
    };
    let results = sweep::run_sweep(&grid, &train_set, test_set.as_ref(), &options)?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    writeln!(out, "points={}", results.len())?;
    writeln!(out, "failed={failed}")?;
    writeln!(out, "frontier:")?;
    for r in sweep::pareto_frontier(&results) {
        writeln!(
            out,
            "t={} n={} entries={} k={} size_kib={} accuracy={:.6}",
            r.point.bits_per_input,
            r.point.inputs_per_filter,
            r.point.entries_per_filter,
            r.point.hashes_per_filter,
            r.size_kib(),
            r.score().unwrap_or(0.0)
        )?;
    }
    writeln!(out, "results={}", args.out.display())?;
    Ok(())
}
