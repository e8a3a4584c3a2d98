//! Hyperparameter sweeps over `(t, n, entries, k)` grids.
//!
//! Every grid point gets its own seed derived from the base seed and the
//! point, so a point's result does not depend on which worker ran it or in
//! what order. Rows are appended to the results file as points finish; the
//! file is rewritten sorted when the sweep completes, and a rerun skips the
//! points already present.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use thiserror::Error;

use crate::datasets::LabeledDataset;
use crate::model::ModelConfig;
use crate::persistence::format_kib;
use crate::pipeline::{self, TrainOptions, DEFAULT_HOLDOUT};
use crate::parallel::Parallelism;

pub const RESULTS_HEADER: [&str; 12] = [
    "dataset", "t", "n", "entries", "k", "seed", "b", "val_acc", "test_acc", "size_kib", "seconds", "error",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("results file: {0}")]
    Results(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One `(t, n, entries, k)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SweepPoint {
    pub bits_per_input: usize,
    pub inputs_per_filter: usize,
    pub entries_per_filter: usize,
    pub hashes_per_filter: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub dataset: String,
    pub bits_per_input: Vec<usize>,
    pub inputs_per_filter: Vec<usize>,
    pub entries_per_filter: Vec<usize>,
    pub hashes_per_filter: Vec<usize>,
    pub seed: u64,
}

impl SweepGrid {
    /// The MNIST grid: 8 encodings, 3 filter widths, 7 table sizes and 6
    /// hash counts.
    pub fn mnist(seed: u64) -> Self {
        Self {
            dataset: "mnist".into(),
            bits_per_input: (1..=8).collect(),
            inputs_per_filter: vec![28, 49, 56],
            entries_per_filter: (7..=13).map(|e| 1 << e).collect(),
            hashes_per_filter: (1..=6).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let axes = [
            ("bits_per_input", &self.bits_per_input),
            ("inputs_per_filter", &self.inputs_per_filter),
            ("entries_per_filter", &self.entries_per_filter),
            ("hashes_per_filter", &self.hashes_per_filter),
        ];
        for (name, axis) in axes {
            if axis.is_empty() {
                return Err(SweepError::Grid(format!("{name} has no values")));
            }
            if axis.contains(&0) {
                return Err(SweepError::Grid(format!("{name} values must be positive")));
            }
        }
        if let Some(e) = self.entries_per_filter.iter().find(|e| !e.is_power_of_two()) {
            return Err(SweepError::Grid(format!("entries_per_filter {e} is not a power of two")));
        }
        Ok(())
    }

    /// All points, `t` varying slowest and `k` fastest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &t in &self.bits_per_input {
            for &n in &self.inputs_per_filter {
                for &entries in &self.entries_per_filter {
                    for &k in &self.hashes_per_filter {
                        points.push(SweepPoint {
                            bits_per_input: t,
                            inputs_per_filter: n,
                            entries_per_filter: entries,
                            hashes_per_filter: k,
                        });
                    }
                }
            }
        }
        points
    }

    /// Seed used for `point`.
    pub fn point_seed(&self, point: &SweepPoint) -> u64 {
        [
            point.bits_per_input,
            point.inputs_per_filter,
            point.entries_per_filter,
            point.hashes_per_filter,
        ]
        .iter()
        .fold(splitmix64(self.seed), |h, &v| splitmix64(h ^ v as u64))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub dataset: String,
    pub point: SweepPoint,
    pub seed: u64,
    pub b: Option<u32>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub size_bits: u64,
    pub seconds: f64,
    pub error: Option<String>,
}

impl SweepResult {
    /// Test accuracy when there is a test set, otherwise validation accuracy.
    pub fn score(&self) -> Option<f64> {
        self.test_acc.or(self.val_acc)
    }

    pub fn size_kib(&self) -> String {
        format_kib(self.size_bits)
    }

    fn record(&self) -> Vec<String> {
        let acc = |a: Option<f64>| a.map_or(String::new(), |a| format!("{a:.6}"));
        vec![
            self.dataset.clone(),
            self.point.bits_per_input.to_string(),
            self.point.inputs_per_filter.to_string(),
            self.point.entries_per_filter.to_string(),
            self.point.hashes_per_filter.to_string(),
            self.seed.to_string(),
            self.b.map_or(String::new(), |b| b.to_string()),
            acc(self.val_acc),
            acc(self.test_acc),
            self.size_kib(),
            format!("{:.3}", self.seconds),
            self.error.clone().unwrap_or_default(),
        ]
    }

    fn from_record(record: &csv::StringRecord, size_of: impl Fn(&SweepPoint) -> u64) -> Result<Self, SweepError> {
        if record.len() != RESULTS_HEADER.len() {
            return Err(SweepError::Results(format!("row has {} fields", record.len())));
        }
        let bad = |what: &str| SweepError::Results(format!("bad {what} field {:?}", record));
        let int = |i: usize| record[i].parse::<usize>().map_err(|_| bad(RESULTS_HEADER[i]));
        let opt_f = |i: usize| -> Result<Option<f64>, SweepError> {
            if record[i].is_empty() {
                Ok(None)
            } else {
                record[i].parse().map(Some).map_err(|_| bad(RESULTS_HEADER[i]))
            }
        };
        let point = SweepPoint {
            bits_per_input: int(1)?,
            inputs_per_filter: int(2)?,
            entries_per_filter: int(3)?,
            hashes_per_filter: int(4)?,
        };
        Ok(Self {
            dataset: record[0].to_string(),
            seed: record[5].parse().map_err(|_| bad("seed"))?,
            b: if record[6].is_empty() {
                None
            } else {
                Some(record[6].parse().map_err(|_| bad("b"))?)
            },
            val_acc: opt_f(7)?,
            test_acc: opt_f(8)?,
            size_bits: size_of(&point),
            seconds: record[10].parse().map_err(|_| bad("seconds"))?,
            error: (!record[11].is_empty()).then(|| record[11].to_string()),
            point,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; 1 runs on the calling thread.
    pub workers: usize,
    /// Record wall time per point. Without it `seconds` is 0, which makes
    /// results files reproducible byte for byte.
    pub timing: bool,
    pub holdout: f64,
    /// Results file, appended to as points finish and rewritten sorted at the end.
    pub results: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            timing: true,
            holdout: DEFAULT_HOLDOUT,
            results: None,
        }
    }
}

/// Trains and scores one grid point. Failures become error rows.
pub fn run_point(
    grid: &SweepGrid,
    point: SweepPoint,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    options: &SweepOptions,
) -> SweepResult {
    let seed = grid.point_seed(&point);
    let config = config_for(train, &point, seed);
    let start = Instant::now();
    let outcome = pipeline::train(
        config,
        train,
        TrainOptions {
            holdout: options.holdout,
            parallelism: Parallelism::Sequential,
        },
    )
    .and_then(|trained| {
        let test_acc = test.map(|t| trained.binarized.evaluate(t, None)).transpose()?;
        Ok((trained.selection, test_acc))
    });
    let seconds = if options.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut result = SweepResult {
        dataset: grid.dataset.clone(),
        point,
        seed,
        b: None,
        val_acc: None,
        test_acc: None,
        size_bits: config.size_bits(),
        seconds,
        error: None,
    };
    match outcome {
        Ok((selection, test_acc)) => {
            result.b = Some(selection.b);
            result.val_acc = Some(selection.accuracy);
            result.test_acc = test_acc;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

fn config_for(data: &LabeledDataset, point: &SweepPoint, seed: u64) -> ModelConfig {
    pipeline::config_for(
        data,
        point.bits_per_input,
        point.inputs_per_filter,
        point.entries_per_filter,
        point.hashes_per_filter,
        seed,
    )
}

/// Runs every point of `grid` not already in the results file. Returns all
/// results, previous ones included, sorted by size and then by descending
/// accuracy.
pub fn run_sweep(
    grid: &SweepGrid,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    options: &SweepOptions,
) -> Result<Vec<SweepResult>, SweepError> {
    grid.validate()?;
    let size_of = |p: &SweepPoint| config_for(train, p, 0).size_bits();
    let mut previous = match &options.results {
        Some(path) if path.exists() => read_results(path, size_of)?,
        _ => Vec::new(),
    };
    let done: HashSet<(String, SweepPoint, u64)> = previous
        .iter()
        .map(|r| (r.dataset.clone(), r.point, r.seed))
        .collect();
    previous.retain(|r| r.dataset == grid.dataset);
    let pending: Vec<SweepPoint> = grid
        .points()
        .into_iter()
        .filter(|p| !done.contains(&(grid.dataset.clone(), *p, grid.point_seed(p))))
        .collect();

    let writer = match &options.results {
        Some(path) => Some(Mutex::new(open_appender(path)?)),
        None => None,
    };
    let run = |p: &SweepPoint| -> Result<SweepResult, SweepError> {
        let result = run_point(grid, *p, train, test, options);
        if let Some(w) = &writer {
            let mut w = w.lock().expect("results writer poisoned");
            w.write_record(result.record())?;
            w.flush().map_err(|source| SweepError::Io {
                path: options.results.clone().unwrap_or_default(),
                source,
            })?;
        }
        Ok(result)
    };
    let fresh = run_points(&pending, options.workers, run)?;
    drop(writer);

    let mut all = previous;
    all.extend(fresh);
    sort_results(&mut all);
    if let Some(path) = &options.results {
        write_results(path, &all)?;
    }
    Ok(all)
}

#[cfg(feature = "parallel")]
fn run_points<F>(points: &[SweepPoint], workers: usize, run: F) -> Result<Vec<SweepResult>, SweepError>
where
    F: Fn(&SweepPoint) -> Result<SweepResult, SweepError> + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return points.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    pool.install(|| points.par_iter().map(run).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_points<F>(points: &[SweepPoint], _workers: usize, run: F) -> Result<Vec<SweepResult>, SweepError>
where
    F: Fn(&SweepPoint) -> Result<SweepResult, SweepError>,
{
    points.iter().map(run).collect()
}

/// Size ascending, then accuracy descending, then grid order. Error rows go
/// after successful ones of the same size.
pub fn sort_results(results: &mut [SweepResult]) {
    results.sort_by(|a, b| {
        a.size_bits
            .cmp(&b.size_bits)
            .then_with(|| {
                let key = |r: &SweepResult| r.score().unwrap_or(f64::NEG_INFINITY);
                key(b).total_cmp(&key(a))
            })
            .then_with(|| a.point.cmp(&b.point))
            .then_with(|| a.dataset.cmp(&b.dataset))
    });
}

/// For each size, the most accurate model no larger than it; accuracy
/// strictly increases along the returned list.
pub fn pareto_frontier(results: &[SweepResult]) -> Vec<SweepResult> {
    let mut ok: Vec<SweepResult> = results.iter().filter(|r| r.score().is_some()).cloned().collect();
    sort_results(&mut ok);
    let mut frontier: Vec<SweepResult> = Vec::new();
    for r in ok {
        let best = frontier.last().and_then(|f| f.score());
        if best.is_none_or(|b| r.score().unwrap() > b) {
            frontier.push(r);
        }
    }
    frontier
}

fn open_appender(path: &Path) -> Result<csv::Writer<fs::File>, SweepError> {
    let fresh = !path.exists() || fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(RESULTS_HEADER)?;
        w.flush().map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(w)
}

/// Writes a complete results file, header first.
pub fn write_results(path: &Path, results: &[SweepResult]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a results file. `size_of` recomputes each row's size in bits.
pub fn read_results(path: &Path, size_of: impl Fn(&SweepPoint) -> u64) -> Result<Vec<SweepResult>, SweepError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    if reader.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(SweepError::Results("unexpected header".into()));
    }
    reader
        .records()
        .map(|r| SweepResult::from_record(&r?, &size_of))
        .collect()
}
