//! Model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes  "BTHW"
//! version          u32      1
//! feature_count    u32
//! class_count      u32
//! bits_per_input   u32
//! inputs_per_filter u32
//! entries          u32
//! hashes           u32
//! seed             u64
//! state            u8       0 counting, 1 binarized
//! has_bleach       u8
//! bleach           u32      0 when absent
//! thresholds       u32 count, then f64 each
//! mapping          u32 count, then u32 each
//! hash parameters  u32 count, then u32 each
//! labels           u32 count, then per label u32 byte length and UTF-8
//! payload          u64 byte length, then filters class-major
//! ```
//!
//! A binarized filter takes `ceil(entries / 8)` bytes, bit `i` of the table
//! at bit `i % 8` of byte `i / 8`. A counting filter takes `entries` u32
//! counters. The payload length follows from the configuration alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datasets::LabelDictionary;
use crate::encoding::ThermometerEncoder;
use crate::filters::{BinaryBloomFilter, CountingBloomFilter};
use crate::hashing::H3HashFamily;
use crate::model::{BthowenModel, Discriminator, InputMapping, ModelConfig, ModelError, ModelState};

pub const MAGIC: &[u8; 4] = b"BTHW";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file truncated at byte {0}")]
    Truncated(usize),
    #[error("model file has {0} trailing bytes")]
    Trailing(usize),
    #[error("payload is {found} bytes, configuration implies {expected}")]
    PayloadLength { expected: u64, found: u64 },
    #[error("bad model file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Serializes `model` to bytes.
pub fn to_bytes(model: &BthowenModel) -> Vec<u8> {
    let c = model.config();
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    put_u32(&mut w, VERSION);
    for v in [
        c.feature_count,
        c.class_count,
        c.bits_per_input,
        c.inputs_per_filter,
        c.entries_per_filter,
        c.hashes_per_filter,
    ] {
        put_u32(&mut w, v as u32);
    }
    w.extend_from_slice(&c.seed.to_le_bytes());
    w.push(match model.state() {
        ModelState::Counting => 0,
        ModelState::Binarized => 1,
    });
    w.push(model.bleach().is_some() as u8);
    put_u32(&mut w, model.bleach().unwrap_or(0));

    let thresholds = model.encoder().threshold_table();
    put_u32(&mut w, thresholds.len() as u32);
    for t in thresholds {
        w.extend_from_slice(&t.to_le_bytes());
    }
    put_u32s(&mut w, model.mapping().order());
    put_u32s(&mut w, model.family().parameters());
    put_u32(&mut w, model.labels().len() as u32);
    for name in model.labels().names() {
        put_u32(&mut w, name.len() as u32);
        w.extend_from_slice(name.as_bytes());
    }

    let payload_at = w.len();
    w.extend_from_slice(&0u64.to_le_bytes());
    for d in model.discriminators() {
        match d {
            Discriminator::Binary(filters) => {
                for f in filters {
                    w.extend_from_slice(&f.to_bytes());
                }
            }
            Discriminator::Counting(filters) => {
                for f in filters {
                    for c in f.counters() {
                        w.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
        }
    }
    let payload_len = (w.len() - payload_at - 8) as u64;
    w[payload_at..payload_at + 8].copy_from_slice(&payload_len.to_le_bytes());
    w
}

/// Parses a model file.
pub fn from_bytes(bytes: &[u8]) -> Result<BthowenModel, PersistError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4).map_err(|_| PersistError::BadMagic)? != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(PersistError::Version(version));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let config = ModelConfig {
        feature_count: dims[0],
        class_count: dims[1],
        bits_per_input: dims[2],
        inputs_per_filter: dims[3],
        entries_per_filter: dims[4],
        hashes_per_filter: dims[5],
        seed: r.u64()?,
    };
    config.validate()?;
    let state = match r.u8()? {
        0 => ModelState::Counting,
        1 => ModelState::Binarized,
        s => return Err(PersistError::Invalid(format!("unknown state {s}"))),
    };
    let has_bleach = r.u8()?;
    let bleach_value = r.u32()?;
    let bleach = match has_bleach {
        0 => None,
        1 => Some(bleach_value),
        v => return Err(PersistError::Invalid(format!("bad bleach flag {v}"))),
    };

    let count = r.count(config.encoded_len(), "threshold")?;
    let thresholds = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let encoder = ThermometerEncoder::from_thresholds(config.feature_count, config.bits_per_input, thresholds)
        .map_err(ModelError::from)?;
    let count = r.count(config.padded_len(), "mapping")?;
    let order = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let mapping = InputMapping::from_order(&config, order)?;
    let count = r.count(config.inputs_per_filter * config.hashes_per_filter, "hash parameter")?;
    let params = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let family = H3HashFamily::from_parameters(
        config.inputs_per_filter,
        config.address_bits(),
        config.hashes_per_filter,
        params,
    )
    .map_err(ModelError::from)?;
    let count = r.count(config.class_count, "label")?;
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        names.push(
            String::from_utf8(raw.to_vec()).map_err(|_| PersistError::Invalid("label is not UTF-8".into()))?,
        );
    }
    let labels = LabelDictionary::new(names);
    if labels.len() != config.class_count {
        return Err(PersistError::Invalid("duplicate label names".into()));
    }

    let expected = payload_bytes(&config, state);
    let found = r.u64()?;
    if found != expected {
        return Err(PersistError::PayloadLength { expected, found });
    }
    let n = config.filters_per_discriminator();
    let entries = config.entries_per_filter;
    let mut discriminators = Vec::with_capacity(config.class_count);
    for _ in 0..config.class_count {
        discriminators.push(match state {
            ModelState::Binarized => {
                let filter_bytes = entries.div_ceil(8);
                let filters = (0..n)
                    .map(|_| Ok(BinaryBloomFilter::from_bytes(entries, r.take(filter_bytes)?)))
                    .collect::<Result<_, PersistError>>()?;
                Discriminator::Binary(filters)
            }
            ModelState::Counting => {
                let filters = (0..n)
                    .map(|_| {
                        let counters = (0..entries).map(|_| r.u32()).collect::<Result<_, _>>()?;
                        Ok(CountingBloomFilter::from_counters(counters))
                    })
                    .collect::<Result<_, PersistError>>()?;
                Discriminator::Counting(filters)
            }
        });
    }
    if r.at != bytes.len() {
        return Err(PersistError::Trailing(bytes.len() - r.at));
    }
    Ok(BthowenModel::from_parts(
        config,
        encoder,
        mapping,
        family,
        discriminators,
        bleach,
        labels,
    )?)
}

pub fn save(model: &BthowenModel, path: &Path) -> Result<(), PersistError> {
    fs::write(path, to_bytes(model)).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<BthowenModel, PersistError> {
    let bytes = fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

/// Bytes of filter payload for a model in `state`.
pub fn payload_bytes(config: &ModelConfig, state: ModelState) -> u64 {
    let filters = config.class_count as u64 * config.filters_per_discriminator() as u64;
    match state {
        ModelState::Binarized => filters * config.entries_per_filter.div_ceil(8) as u64,
        ModelState::Counting => filters * config.entries_per_filter as u64 * 4,
    }
}

/// Size of a model split into filter tables and everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    /// Bits of filter tables in the binarized model, `M * N * entries`.
    pub payload_bits: u64,
    /// Bytes of the file that are not filter payload.
    pub overhead_bytes: u64,
}

impl SizeReport {
    pub fn of(model: &BthowenModel) -> Self {
        let file = to_bytes(model).len() as u64;
        Self {
            payload_bits: model.config().size_bits(),
            overhead_bytes: file - payload_bytes(model.config(), model.state()),
        }
    }

    pub fn kib(&self) -> String {
        format_kib(self.payload_bits)
    }
}

/// `bits / 8192` KiB to three significant figures, halves rounded up.
pub fn format_kib(bits: u64) -> String {
    if bits == 0 {
        return "0".into();
    }
    // value = bits / 8192; find d with 10^d <= value < 10^(d+1)
    let bits = bits as u128;
    let mut d: i32 = 0;
    while scaled_below(bits, d) {
        d -= 1;
    }
    while !scaled_below(bits, d + 1) {
        d += 1;
    }
    let mut digits = round_to_three(bits, d);
    if digits == 1000 {
        d += 1;
        digits = 100;
    }
    if d >= 2 {
        (digits * pow10(d - 2)).to_string()
    } else {
        let decimals = (2 - d) as usize;
        let s = format!("{:0>width$}", digits, width = decimals + 1);
        let (int, frac) = s.split_at(s.len() - decimals);
        format!("{int}.{frac}")
    }
}

fn pow10(e: i32) -> u128 {
    10u128.pow(e.max(0) as u32)
}

/// Whether `bits / 8192 < 10^e`.
fn scaled_below(bits: u128, e: i32) -> bool {
    if e >= 0 {
        bits < 8192 * pow10(e)
    } else {
        bits * pow10(-e) < 8192
    }
}

/// `round_half_up(bits / 8192 * 10^(2 - d))`.
fn round_to_three(bits: u128, d: i32) -> u128 {
    let (num, den) = if d <= 2 {
        (bits * pow10(2 - d), 8192)
    } else {
        (bits, 8192 * pow10(d - 2))
    };
    (2 * num + den) / (2 * den)
}

/// Human-readable summary of a model.
pub fn inspect(model: &BthowenModel) -> String {
    let c = model.config();
    let size = SizeReport::of(model);
    let mut out = String::new();
    let state = match model.state() {
        ModelState::Counting => "counting",
        ModelState::Binarized => "binarized",
    };
    let b = model.bleach().map_or("none".to_string(), |b| b.to_string());
    let _ = writeln!(out, "format=BTHW version={VERSION} state={state}");
    let _ = writeln!(out, "features={}, classes={}", c.feature_count, c.class_count);
    let _ = writeln!(
        out,
        "bits_per_input={}, inputs_per_filter={}, filters_per_discriminator={}",
        c.bits_per_input,
        c.inputs_per_filter,
        c.filters_per_discriminator()
    );
    let _ = writeln!(out, "entries_per_filter={}, hashes={}, b={b}", c.entries_per_filter, c.hashes_per_filter);
    let _ = writeln!(out, "seed={}", c.seed);
    let _ = writeln!(out, "padding_bits={}", model.mapping().padding());
    let _ = writeln!(out, "size_kib={}", size.kib());
    let _ = writeln!(out, "payload_bits={}", size.payload_bits);
    let _ = writeln!(out, "overhead_bytes={}", size.overhead_bytes);
    let _ = writeln!(out, "labels={}", model.labels().names().join(","));
    out
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u32s(w: &mut Vec<u8>, vs: &[u32]) {
    put_u32(w, vs.len() as u32);
    for v in vs {
        put_u32(w, *v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(PersistError::Truncated(self.bytes.len()))?;
        let slice = &self.bytes[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length prefix that must equal `expected`.
    fn count(&mut self, expected: usize, what: &str) -> Result<usize, PersistError> {
        let found = self.u32()? as usize;
        if found != expected {
            return Err(PersistError::Invalid(format!(
                "{found} {what} values, configuration implies {expected}"
            )));
        }
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::LabeledDataset;
    use crate::encoding::standard_quantiles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> BthowenModel {
        let config = ModelConfig {
            feature_count: 5,
            class_count: 3,
            bits_per_input: 3,
            inputs_per_filter: 4,
            entries_per_filter: 32,
            hashes_per_filter: 2,
            seed: 4,
        };
        let enc = ThermometerEncoder::from_thresholds(5, 3, standard_quantiles(3).repeat(5)).unwrap();
        let mut model = BthowenModel::new(config, enc)
            .unwrap()
            .with_labels(LabelDictionary::new(["x", "y", "zz"]))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..60 {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            model.train_sample(&s, rng.random_range(0..3)).unwrap();
        }
        model
    }

    fn probes() -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let features = (0..500).map(|_| rng.random_range(-2.5..2.5)).collect();
        LabeledDataset::new(features, 5, vec![0; 100], LabelDictionary::numeric(3)).unwrap()
    }

    #[test]
    fn kib_formatting() {
        let cases = [
            (573_440, "70.0"),
            (1_720_320, "210"),
            (7_864_320, "960"),
            (7_168, "0.875"),
            (2_304, "0.281"),
            (638_976, "78.0"),
            (73_728, "9.00"),
            (21_504, "2.63"),
            (18_432, "2.25"),
            (28_160, "3.44"),
            (3_456, "0.422"),
            (8_192, "1.00"),
            (8_192 * 1000, "1000"),
            (8_192 * 12_345, "12300"),
            (81_915, "10.0"),
            (8, "0.000977"),
        ];
        for (bits, expected) in cases {
            assert_eq!(format_kib(bits), expected, "{bits} bits");
        }
    }

    #[test]
    fn round_trip_counting() {
        let model = tiny();
        let back = from_bytes(&to_bytes(&model)).unwrap();
        assert_eq!(back, model);
        let p = probes();
        assert_eq!(back.predict_all(&p, Some(1)).unwrap(), model.predict_all(&p, Some(1)).unwrap());
    }

    #[test]
    fn round_trip_binarized() {
        let bin = tiny().binarize(2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bthw");
        save(&bin, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, bin);
        let p = probes();
        assert_eq!(back.predict_all(&p, None).unwrap(), bin.predict_all(&p, None).unwrap());
        assert_eq!(back.labels().names(), &["x", "y", "zz"]);
        assert_eq!(to_bytes(&back), to_bytes(&bin));
    }

    #[test]
    fn counting_files_are_larger() {
        let model = tiny();
        let bin = model.binarize(1).unwrap();
        let c = payload_bytes(model.config(), ModelState::Counting);
        let b = payload_bytes(model.config(), ModelState::Binarized);
        assert_eq!(c, 32 * b);
        assert!(to_bytes(&model).len() > to_bytes(&bin).len());
        assert_eq!(SizeReport::of(&model).overhead_bytes, SizeReport::of(&bin).overhead_bytes);
    }

    #[test]
    fn rejects_damage() {
        let bytes = to_bytes(&tiny().binarize(1).unwrap());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(PersistError::BadMagic)));
        assert!(matches!(from_bytes(b"BT"), Err(PersistError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(PersistError::Version(9))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(PersistError::Truncated(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(PersistError::Trailing(1))));
        // entries field 32 -> 64 no longer matches the stored tables
        let mut bad = bytes.clone();
        bad[24] = 64;
        assert!(from_bytes(&bad).is_err());
        // entries field 32 -> 33 is rejected as a configuration
        let mut bad = bytes;
        bad[24] = 33;
        assert!(matches!(from_bytes(&bad), Err(PersistError::Model(ModelError::Config(_)))));
    }

    #[test]
    fn inspect_lists_config() {
        let text = inspect(&tiny().binarize(3).unwrap());
        assert!(text.contains("entries_per_filter=32, hashes=2, b=3"));
        assert!(text.contains("state=binarized"));
        // 3 classes * 4 filters * 32 entries = 384 bits
        assert!(text.contains("size_kib=0.0469"));
    }
}
