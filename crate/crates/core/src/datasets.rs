//! Labeled datasets: MNIST-style IDX files and delimited text tables.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated: need {needed} bytes, have {found}")]
    Truncated { needed: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("line {line}: expected {expected} columns, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?} as a number")]
    BadNumber { line: usize, column: usize, value: String },
    #[error("line {line}, column {column}: value is not finite")]
    NonFinite { line: usize, column: usize },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("label column {column} out of range for {width} columns")]
    LabelColumn { column: usize, width: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset shape: {0}")]
    Shape(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Class names in index order. Label `i` of a dataset is `names[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelDictionary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelDictionary {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dict = Self::default();
        for name in names {
            dict.insert(name.into());
        }
        dict
    }

    /// Names `"0"`, `"1"`, ... for datasets whose labels are already indices.
    pub fn numeric(count: usize) -> Self {
        Self::new((0..count).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn insert(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        i
    }
}

/// Samples as rows of real features with dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    feature_count: usize,
    labels: Vec<usize>,
    dictionary: LabelDictionary,
}

impl LabeledDataset {
    /// `features` is row-major, `labels.len()` rows of `feature_count` values.
    pub fn new(
        features: Vec<f64>,
        feature_count: usize,
        labels: Vec<usize>,
        dictionary: LabelDictionary,
    ) -> Result<Self, DatasetError> {
        if feature_count == 0 {
            return Err(DatasetError::Shape("feature count must be positive".into()));
        }
        if features.len() != labels.len() * feature_count {
            return Err(DatasetError::Shape(format!(
                "{} feature values for {} samples of {} features",
                features.len(),
                labels.len(),
                feature_count
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= dictionary.len()) {
            return Err(DatasetError::Shape(format!(
                "label {bad} outside {} classes",
                dictionary.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Shape("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            feature_count,
            labels,
            dictionary,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.dictionary.len()
    }

    pub fn dictionary(&self) -> &LabelDictionary {
        &self.dictionary
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        let f = self.feature_count;
        &self.features[index * f..(index + 1) * f]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone {
        self.features.chunks_exact(self.feature_count)
    }

    /// `(sample, label)` pairs in order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> {
        self.samples().zip(self.labels.iter().copied())
    }

    /// The rows at `indices`, in that order. Keeps the label dictionary.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.feature_count);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            feature_count: self.feature_count,
            labels,
            dictionary: self.dictionary.clone(),
        }
    }

    /// Seeded shuffle, then the first `round(len * train_fraction)` rows go to
    /// the first part and the rest to the second. With at least two rows both
    /// parts are non-empty.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Self, Self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut cut = (self.len() as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize;
        if self.len() >= 2 {
            cut = cut.clamp(1, self.len() - 1);
        }
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }

    /// Writes the dataset as a delimited table with a header row, label last.
    pub fn save_delimited(&self, path: &Path, delimiter: u8) -> Result<(), DatasetError> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)?;
        let mut header: Vec<String> = (0..self.feature_count).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        writer.write_record(&header)?;
        for (sample, label) in self.iter() {
            let mut record: Vec<String> = sample.iter().map(|v| format!("{v:?}")).collect();
            record.push(self.dictionary.names[label].clone());
            writer.write_record(&record)?;
        }
        writer.flush().map_err(io_error(path))?;
        Ok(())
    }
}

/// How to read a delimited table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimitedOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Column holding the class; `None` means the last column.
    pub label_column: Option<usize>,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            label_column: None,
        }
    }
}

/// Reads a delimited table. Without a `dictionary`, labels are numbered in
/// order of first appearance; with one, unknown labels are an error.
pub fn load_delimited(
    path: &Path,
    options: &DelimitedOptions,
    dictionary: Option<&LabelDictionary>,
) -> Result<LabeledDataset, DatasetError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    read_delimited(file, options, dictionary)
}

pub fn read_delimited<R: Read>(
    reader: R,
    options: &DelimitedOptions,
    dictionary: Option<&LabelDictionary>,
) -> Result<LabeledDataset, DatasetError> {
    let table = read_table(reader, options)?;
    let mut dict = dictionary.cloned().unwrap_or_default();
    let mut features = Vec::new();
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut width = None;
    for (line, row) in &table.rows {
        let label_column = options.label_column.unwrap_or(row.len().saturating_sub(1));
        if label_column >= row.len() {
            return Err(DatasetError::LabelColumn {
                column: label_column,
                width: row.len(),
            });
        }
        let name = row[label_column].trim();
        let label = match dictionary {
            Some(fixed) => fixed.lookup(name).ok_or_else(|| DatasetError::UnknownLabel {
                line: *line,
                label: name.to_string(),
            })?,
            None => dict.insert(name.to_string()),
        };
        labels.push(label);
        for (column, cell) in row.iter().enumerate() {
            if column != label_column {
                features.push(parse_number(cell, *line, column)?);
            }
        }
        width.get_or_insert(row.len() - 1);
    }
    let feature_count = match width {
        Some(w) => w,
        None => table.header_width.map(|w| w.saturating_sub(1)).unwrap_or(0),
    };
    if feature_count == 0 {
        return Err(DatasetError::Shape("table has no feature columns".into()));
    }
    LabeledDataset::new(features, feature_count, labels, dict)
}

/// Reads a table of feature rows. If `options.label_column` is set that column
/// is skipped; `skip_last` skips the final column instead.
pub fn load_features(path: &Path, options: &DelimitedOptions, skip_last: bool) -> Result<Vec<Vec<f64>>, DatasetError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let table = read_table(file, options)?;
    table
        .rows
        .iter()
        .map(|(line, row)| {
            let skip = if skip_last { row.len().checked_sub(1) } else { options.label_column };
            row.iter()
                .enumerate()
                .filter(|(c, _)| Some(*c) != skip)
                .map(|(c, cell)| parse_number(cell, *line, c))
                .collect()
        })
        .collect()
}

struct Table {
    header_width: Option<usize>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(reader: R, options: &DelimitedOptions) -> Result<Table, DatasetError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header_width = if options.has_header {
        Some(csv_reader.headers()?.len())
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut expected = header_width;
    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let width = *expected.get_or_insert(record.len());
        if record.len() != width {
            return Err(DatasetError::Ragged {
                line,
                expected: width,
                found: record.len(),
            });
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { header_width, rows })
}

fn parse_number(cell: &str, line: usize, column: usize) -> Result<f64, DatasetError> {
    let value: f64 = cell.trim().parse().map_err(|_| DatasetError::BadNumber {
        line,
        column,
        value: cell.to_string(),
    })?;
    if !value.is_finite() {
        return Err(DatasetError::NonFinite { line, column });
    }
    Ok(value)
}

/// Loads an IDX image file and its label file. Pixels become reals in `[0, 255]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset, DatasetError> {
    let image_bytes = fs::read(images).map_err(io_error(images))?;
    let label_bytes = fs::read(labels).map_err(io_error(labels))?;
    parse_idx(&image_bytes, &label_bytes)
}

pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledDataset, DatasetError> {
    let (image_dims, pixels) = parse_idx_body(image_bytes, IDX_IMAGES_MAGIC, 3)?;
    let (label_dims, raw_labels) = parse_idx_body(label_bytes, IDX_LABELS_MAGIC, 1)?;
    let count = image_dims[0];
    if label_dims[0] != count {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: label_dims[0],
        });
    }
    let feature_count = image_dims[1] * image_dims[2];
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let features = pixels.iter().map(|&p| p as f64).collect();
    LabeledDataset::new(features, feature_count, labels, LabelDictionary::numeric(classes))
}

/// Loads an IDX image file on its own, for unlabeled prediction. Returns
/// the flat pixel values and the pixels per image.
pub fn load_idx_images(path: &Path) -> Result<(Vec<f64>, usize), DatasetError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    let (dims, pixels) = parse_idx_body(&bytes, IDX_IMAGES_MAGIC, 3)?;
    Ok((pixels.iter().map(|&p| p as f64).collect(), dims[1] * dims[2]))
}

fn parse_idx_body(bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, &[u8]), DatasetError> {
    let header = 4 + 4 * dims;
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if bytes.len() >= 4 && word(0) != magic {
        return Err(DatasetError::BadMagic {
            expected: magic,
            found: word(0),
        });
    }
    if bytes.len() < header {
        return Err(DatasetError::Truncated {
            needed: header,
            found: bytes.len(),
        });
    }
    let shape: Vec<usize> = (1..=dims).map(|i| word(i) as usize).collect();
    let body: usize = shape.iter().product();
    if bytes.len() < header + body {
        return Err(DatasetError::Truncated {
            needed: header + body,
            found: bytes.len(),
        });
    }
    Ok((shape, &bytes[header..header + body]))
}

/// Serializes images and labels as an IDX pair. Pixel values are clamped to
/// bytes.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
    dataset: &LabeledDataset,
) -> Result<(), DatasetError> {
    if rows * cols != dataset.feature_count() {
        return Err(DatasetError::Shape(format!(
            "{rows}x{cols} images do not match {} features",
            dataset.feature_count()
        )));
    }
    let n = dataset.len() as u32;
    let mut images = Vec::with_capacity(16 + dataset.features.len());
    for word in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&word.to_be_bytes());
    }
    images.extend(dataset.features.iter().map(|v| v.clamp(0.0, 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + dataset.len());
    for word in [IDX_LABELS_MAGIC, n] {
        labels.extend_from_slice(&word.to_be_bytes());
    }
    labels.extend(dataset.labels.iter().map(|&l| l as u8));
    fs::File::create(images_path)
        .and_then(|mut f| f.write_all(&images))
        .map_err(io_error(images_path))?;
    fs::File::create(labels_path)
        .and_then(|mut f| f.write_all(&labels))
        .map_err(io_error(labels_path))?;
    Ok(())
}
