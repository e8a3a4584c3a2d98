//! The classifier: one discriminator per class, each a row of Bloom filters
//! fed by a shared pseudo-random mapping of the encoded input bits.
//!
//! A model starts in the counting state, is trained in a single pass, has a
//! bleaching threshold chosen on held-out data and is then binarized for
//! inference.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datasets::{LabelDictionary, LabeledDataset};
use crate::encoding::{EncodingError, ThermometerEncoder};
use crate::filters::{BinaryBloomFilter, CountingBloomFilter, FilterError};
use crate::hashing::{H3HashFamily, HashError, MAX_INPUT_BITS, MAX_OUTPUT_BITS};
use crate::parallel::Parallelism;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("dataset has {found} features, model expects {expected}")]
    FeatureCount { expected: usize, found: usize },
    #[error("model is binarized; this needs a counting model")]
    Binarized,
    #[error("a counting model needs a bleaching threshold")]
    BleachRequired,
    #[error("bleaching threshold must be at least 1")]
    ZeroBleach,
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Hyperparameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub feature_count: usize,
    pub class_count: usize,
    pub bits_per_input: usize,
    pub inputs_per_filter: usize,
    pub entries_per_filter: usize,
    pub hashes_per_filter: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("feature_count", self.feature_count),
            ("bits_per_input", self.bits_per_input),
            ("inputs_per_filter", self.inputs_per_filter),
            ("entries_per_filter", self.entries_per_filter),
            ("hashes_per_filter", self.hashes_per_filter),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.class_count < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 classes, got {}",
                self.class_count
            )));
        }
        if !self.entries_per_filter.is_power_of_two() {
            return Err(ModelError::Config(format!(
                "entries_per_filter must be a power of two, got {}",
                self.entries_per_filter
            )));
        }
        if self.address_bits() > MAX_OUTPUT_BITS {
            return Err(ModelError::Config(format!(
                "entries_per_filter must be at most 2^{MAX_OUTPUT_BITS}"
            )));
        }
        if self.inputs_per_filter > MAX_INPUT_BITS {
            return Err(ModelError::Config(format!(
                "inputs_per_filter must be at most {MAX_INPUT_BITS}, got {}",
                self.inputs_per_filter
            )));
        }
        Ok(())
    }

    /// `log2(entries_per_filter)`.
    pub fn address_bits(&self) -> u32 {
        self.entries_per_filter.trailing_zeros()
    }

    /// Encoded width before padding, `F * t`.
    pub fn encoded_len(&self) -> usize {
        self.feature_count * self.bits_per_input
    }

    /// Filters per discriminator, `ceil(F * t / n)`.
    pub fn filters_per_discriminator(&self) -> usize {
        self.encoded_len().div_ceil(self.inputs_per_filter)
    }

    /// Encoded width after zero padding to a multiple of `n`.
    pub fn padded_len(&self) -> usize {
        self.filters_per_discriminator() * self.inputs_per_filter
    }

    /// Bits of a binarized model's filter tables.
    pub fn size_bits(&self) -> u64 {
        self.class_count as u64 * self.filters_per_discriminator() as u64 * self.entries_per_filter as u64
    }
}

/// Pseudo-random assignment of (padded) encoded bits to filter inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputMapping {
    encoded_len: usize,
    inputs_per_filter: usize,
    /// Position `p` of the permuted vector reads padded bit `order[p]`.
    order: Vec<u32>,
}

impl InputMapping {
    pub fn random<R: rand::Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut order: Vec<u32> = (0..config.padded_len() as u32).collect();
        order.shuffle(rng);
        Self {
            encoded_len: config.encoded_len(),
            inputs_per_filter: config.inputs_per_filter,
            order,
        }
    }

    pub fn from_order(config: &ModelConfig, order: Vec<u32>) -> Result<Self, ModelError> {
        let len = config.padded_len();
        let mut seen = vec![false; len];
        if order.len() != len {
            return Err(ModelError::Config(format!(
                "mapping has {} positions, expected {len}",
                order.len()
            )));
        }
        for &p in &order {
            match seen.get_mut(p as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(ModelError::Config("mapping is not a permutation".into())),
            }
        }
        Ok(Self {
            encoded_len: config.encoded_len(),
            inputs_per_filter: config.inputs_per_filter,
            order,
        })
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Zero bits appended to the encoding before permutation.
    pub fn padding(&self) -> usize {
        self.order.len() - self.encoded_len
    }

    /// Splits an encoded sample into filter inputs, one `u64` per filter with
    /// the filter's first input bit least significant.
    pub fn apply(&self, encoded: &[bool], out: &mut [u64]) {
        out.iter_mut().for_each(|w| *w = 0);
        let n = self.inputs_per_filter;
        for (p, &src) in self.order.iter().enumerate() {
            let src = src as usize;
            if src < self.encoded_len && encoded[src] {
                out[p / n] |= 1 << (p % n);
            }
        }
    }
}

/// Filters of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Discriminator {
    Counting(Vec<CountingBloomFilter>),
    Binary(Vec<BinaryBloomFilter>),
}

impl Discriminator {
    /// Number of filters answering yes. `addresses` holds `k` addresses per
    /// filter; `b` is ignored by binary filters.
    pub fn response(&self, addresses: &[u32], k: usize, b: u32) -> usize {
        match self {
            Discriminator::Counting(filters) => filters
                .iter()
                .zip(addresses.chunks_exact(k))
                .filter(|(f, a)| f.min_at(a) >= b)
                .count(),
            Discriminator::Binary(filters) => filters
                .iter()
                .zip(addresses.chunks_exact(k))
                .filter(|(f, a)| f.query_at(a))
                .count(),
        }
    }

    pub fn filter_count(&self) -> usize {
        match self {
            Discriminator::Counting(f) => f.len(),
            Discriminator::Binary(f) => f.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelState {
    Counting,
    Binarized,
}

/// Outcome of the bleaching threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct BleachSelection {
    pub b: u32,
    pub accuracy: f64,
    /// Every threshold evaluated, with its validation accuracy, ascending by `b`.
    pub evaluated: Vec<(u32, f64)>,
}

/// Reusable per-sample buffers.
struct Scratch {
    encoded: Vec<bool>,
    inputs: Vec<u64>,
    addresses: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BthowenModel {
    config: ModelConfig,
    encoder: ThermometerEncoder,
    mapping: InputMapping,
    family: H3HashFamily,
    discriminators: Vec<Discriminator>,
    bleach: Option<u32>,
    labels: LabelDictionary,
    parallelism: Parallelism,
}

impl BthowenModel {
    /// An untrained model with all counters zero. The mapping and then the
    /// hash parameters are drawn from a generator seeded with `config.seed`.
    pub fn new(config: ModelConfig, encoder: ThermometerEncoder) -> Result<Self, ModelError> {
        config.validate()?;
        check_encoder(&config, &encoder)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mapping = InputMapping::random(&config, &mut rng);
        let family = H3HashFamily::sample(
            &mut rng,
            config.inputs_per_filter,
            config.address_bits(),
            config.hashes_per_filter,
        )?;
        let filters = vec![CountingBloomFilter::new(config.entries_per_filter); config.filters_per_discriminator()];
        Ok(Self {
            config,
            encoder,
            mapping,
            family,
            discriminators: vec![Discriminator::Counting(filters); config.class_count],
            bleach: None,
            labels: LabelDictionary::numeric(config.class_count),
            parallelism: Parallelism::default(),
        })
    }

    /// Reassembles a model from stored parts.
    pub fn from_parts(
        config: ModelConfig,
        encoder: ThermometerEncoder,
        mapping: InputMapping,
        family: H3HashFamily,
        discriminators: Vec<Discriminator>,
        bleach: Option<u32>,
        labels: LabelDictionary,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        check_encoder(&config, &encoder)?;
        if mapping.order.len() != config.padded_len() || mapping.inputs_per_filter != config.inputs_per_filter {
            return Err(ModelError::Config("mapping does not match configuration".into()));
        }
        if family.input_bits() != config.inputs_per_filter
            || family.output_bits() != config.address_bits()
            || family.hash_count() != config.hashes_per_filter
        {
            return Err(ModelError::Config("hash family does not match configuration".into()));
        }
        if discriminators.len() != config.class_count || labels.len() != config.class_count {
            return Err(ModelError::Config("class count does not match configuration".into()));
        }
        let binary = matches!(discriminators[0], Discriminator::Binary(_));
        for d in &discriminators {
            let shape_ok = d.filter_count() == config.filters_per_discriminator()
                && match d {
                    Discriminator::Counting(f) => !binary && f.iter().all(|f| f.entries() == config.entries_per_filter),
                    Discriminator::Binary(f) => binary && f.iter().all(|f| f.entries() == config.entries_per_filter),
                };
            if !shape_ok {
                return Err(ModelError::Config("filter tables do not match configuration".into()));
            }
        }
        if binary && bleach.is_none_or(|b| b == 0) {
            return Err(ModelError::Config("binarized model without a bleaching threshold".into()));
        }
        Ok(Self {
            config,
            encoder,
            mapping,
            family,
            discriminators,
            bleach,
            labels,
            parallelism: Parallelism::default(),
        })
    }

    pub fn with_labels(mut self, labels: LabelDictionary) -> Result<Self, ModelError> {
        if labels.len() != self.config.class_count {
            return Err(ModelError::Config(format!(
                "{} label names for {} classes",
                labels.len(),
                self.config.class_count
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn set_parallelism(&mut self, parallelism: Parallelism) {
        self.parallelism = parallelism;
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &ThermometerEncoder {
        &self.encoder
    }

    pub fn mapping(&self) -> &InputMapping {
        &self.mapping
    }

    pub fn family(&self) -> &H3HashFamily {
        &self.family
    }

    pub fn discriminators(&self) -> &[Discriminator] {
        &self.discriminators
    }

    pub fn labels(&self) -> &LabelDictionary {
        &self.labels
    }

    /// The selected bleaching threshold, if any.
    pub fn bleach(&self) -> Option<u32> {
        self.bleach
    }

    pub fn state(&self) -> ModelState {
        match self.discriminators[0] {
            Discriminator::Counting(_) => ModelState::Counting,
            Discriminator::Binary(_) => ModelState::Binarized,
        }
    }

    /// Largest counter in any filter; 1 for a binarized model with any bit set.
    pub fn max_counter(&self) -> u32 {
        self.discriminators
            .iter()
            .flat_map(|d| match d {
                Discriminator::Counting(f) => f.iter().map(|f| f.max_counter()).max(),
                Discriminator::Binary(f) => f.iter().map(|f| (f.count_ones() > 0) as u32).max(),
            })
            .max()
            .unwrap_or(0)
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            encoded: vec![false; self.config.encoded_len()],
            inputs: vec![0; self.config.filters_per_discriminator()],
            addresses: vec![0; self.config.filters_per_discriminator() * self.config.hashes_per_filter],
        }
    }

    fn fill(&self, sample: &[f64], s: &mut Scratch) -> Result<(), ModelError> {
        self.encoder.encode_into(sample, &mut s.encoded)?;
        self.mapping.apply(&s.encoded, &mut s.inputs);
        let k = self.config.hashes_per_filter;
        for (x, out) in s.inputs.iter().zip(s.addresses.chunks_exact_mut(k)) {
            self.family.hash_all(*x, out);
        }
        Ok(())
    }

    /// The `n`-bit input of every filter for `sample`.
    pub fn filter_inputs(&self, sample: &[f64]) -> Result<Vec<u64>, ModelError> {
        let mut s = self.scratch();
        self.fill(sample, &mut s)?;
        Ok(s.inputs)
    }

    /// `k` addresses per filter for `sample`, filter-major. Identical for
    /// every discriminator since they share the mapping and hash family.
    pub fn addresses(&self, sample: &[f64]) -> Result<Vec<u32>, ModelError> {
        let mut s = self.scratch();
        self.fill(sample, &mut s)?;
        Ok(s.addresses)
    }

    /// Presents one sample to the discriminator of its class.
    pub fn train_sample(&mut self, sample: &[f64], label: usize) -> Result<(), ModelError> {
        self.check_label(label)?;
        let mut s = self.scratch();
        self.fill(sample, &mut s)?;
        let k = self.config.hashes_per_filter;
        match &mut self.discriminators[label] {
            Discriminator::Counting(filters) => {
                for (f, a) in filters.iter_mut().zip(s.addresses.chunks_exact(k)) {
                    f.add_at(a)?;
                }
                Ok(())
            }
            Discriminator::Binary(_) => Err(ModelError::Binarized),
        }
    }

    /// Trains on every sample of `data` once. Discriminators train
    /// concurrently; each sees its own samples in dataset order, so the result
    /// equals sequential training.
    pub fn train(&mut self, data: &LabeledDataset) -> Result<(), ModelError> {
        if self.state() == ModelState::Binarized {
            return Err(ModelError::Binarized);
        }
        self.check_dataset(data)?;
        let mut by_class = vec![Vec::new(); self.config.class_count];
        for (i, &label) in data.labels().iter().enumerate() {
            by_class[label].push(i);
        }
        let mut discriminators = std::mem::take(&mut self.discriminators);
        let k = self.config.hashes_per_filter;
        let this = &*self;
        let result = self.parallelism.try_for_each_mut(&mut discriminators, |class, d| {
            let Discriminator::Counting(filters) = d else {
                return Err(ModelError::Binarized);
            };
            let mut s = this.scratch();
            for &i in &by_class[class] {
                this.fill(data.sample(i), &mut s)?;
                for (f, a) in filters.iter_mut().zip(s.addresses.chunks_exact(k)) {
                    f.add_at(a)?;
                }
            }
            Ok(())
        });
        self.discriminators = discriminators;
        result
    }

    fn check_label(&self, label: usize) -> Result<(), ModelError> {
        if label >= self.config.class_count {
            return Err(ModelError::Label {
                label,
                classes: self.config.class_count,
            });
        }
        Ok(())
    }

    fn check_dataset(&self, data: &LabeledDataset) -> Result<(), ModelError> {
        if data.feature_count() != self.config.feature_count {
            return Err(ModelError::FeatureCount {
                expected: self.config.feature_count,
                found: data.feature_count(),
            });
        }
        if let Some(&label) = data.labels().iter().find(|&&l| l >= self.config.class_count) {
            return Err(ModelError::Label {
                label,
                classes: self.config.class_count,
            });
        }
        Ok(())
    }

    fn threshold(&self, b: Option<u32>) -> Result<u32, ModelError> {
        match (self.state(), b) {
            (ModelState::Binarized, _) => Ok(1),
            (ModelState::Counting, None) => Err(ModelError::BleachRequired),
            (ModelState::Counting, Some(0)) => Err(ModelError::ZeroBleach),
            (ModelState::Counting, Some(b)) => Ok(b),
        }
    }

    /// Response of discriminator `class` to `sample`, in `[0, N]`.
    pub fn response(&self, class: usize, sample: &[f64], b: Option<u32>) -> Result<usize, ModelError> {
        self.check_label(class)?;
        let b = self.threshold(b)?;
        let addresses = self.addresses(sample)?;
        Ok(self.discriminators[class].response(&addresses, self.config.hashes_per_filter, b))
    }

    /// Responses of all discriminators. `b` is required for a counting model
    /// and ignored for a binarized one.
    pub fn responses(&self, sample: &[f64], b: Option<u32>) -> Result<Vec<usize>, ModelError> {
        let b = self.threshold(b)?;
        let mut s = self.scratch();
        self.fill(sample, &mut s)?;
        Ok(self.responses_at(&s.addresses, b))
    }

    fn responses_at(&self, addresses: &[u32], b: u32) -> Vec<usize> {
        let k = self.config.hashes_per_filter;
        self.discriminators
            .iter()
            .map(|d| d.response(addresses, k, b))
            .collect()
    }

    /// Class with the strongest response; ties go to the lowest index.
    pub fn predict(&self, sample: &[f64], b: Option<u32>) -> Result<usize, ModelError> {
        Ok(argmax(&self.responses(sample, b)?))
    }

    /// Predictions for every sample of `data`, in order.
    pub fn predict_all(&self, data: &LabeledDataset, b: Option<u32>) -> Result<Vec<usize>, ModelError> {
        self.predict_rows(data.samples().collect::<Vec<_>>().as_slice(), b, data.feature_count())
    }

    /// Predictions for unlabeled rows.
    pub fn predict_rows(&self, rows: &[&[f64]], b: Option<u32>, width: usize) -> Result<Vec<usize>, ModelError> {
        let b = self.threshold(b)?;
        if width != self.config.feature_count {
            return Err(ModelError::FeatureCount {
                expected: self.config.feature_count,
                found: width,
            });
        }
        let predictions = self.parallelism.map_range(rows.len(), |i| {
            let mut s = self.scratch();
            self.fill(rows[i], &mut s)?;
            Ok(argmax(&self.responses_at(&s.addresses, b)))
        });
        predictions.into_iter().collect()
    }

    /// Fraction of `data` classified correctly.
    pub fn evaluate(&self, data: &LabeledDataset, b: Option<u32>) -> Result<f64, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        self.check_dataset(data)?;
        let predictions = self.predict_all(data, b)?;
        let correct = predictions
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// `matrix[true][predicted]` counts over `data`.
    pub fn confusion(&self, data: &LabeledDataset, b: Option<u32>) -> Result<Vec<Vec<usize>>, ModelError> {
        self.check_dataset(data)?;
        let m = self.config.class_count;
        let mut matrix = vec![vec![0; m]; m];
        for (p, &l) in self.predict_all(data, b)?.iter().zip(data.labels()) {
            matrix[l][*p] += 1;
        }
        Ok(matrix)
    }

    /// Searches for the bleaching threshold with the best accuracy on
    /// `validation` and records it on the model.
    ///
    /// The search keeps an interval `[lo, hi]`, initially `[1, max counter]`.
    /// Each step probes two thresholds that cut the interval into thirds on a
    /// log scale and drops the third beyond the worse probe. Once at most
    /// three thresholds remain they are all evaluated. The best threshold
    /// evaluated anywhere is returned, the smaller one on ties. Useful
    /// thresholds sit near the bottom of a range that can reach thousands,
    /// and accuracy wobbles from one threshold to the next, so widely spaced
    /// probes are used rather than neighbouring ones.
    pub fn select_bleach(&mut self, validation: &LabeledDataset) -> Result<BleachSelection, ModelError> {
        if self.state() == ModelState::Binarized {
            return Err(ModelError::Binarized);
        }
        if validation.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        self.check_dataset(validation)?;
        let profile = BleachProfile::build(self, validation)?;
        let mut correct_at: BTreeMap<u32, usize> = BTreeMap::new();
        let mut eval = |b: u32| *correct_at.entry(b).or_insert_with(|| profile.correct(b, self.parallelism));

        let (mut lo, mut hi) = (1u32, self.max_counter().max(1));
        while hi - lo > 2 {
            let ratio = hi as f64 / lo as f64;
            let m1 = ((lo as f64 * ratio.cbrt()).round() as u32).clamp(lo, hi - 2);
            let m2 = ((lo as f64 * ratio.cbrt().powi(2)).round() as u32).clamp(m1 + 1, hi);
            if eval(m1) < eval(m2) {
                lo = m1 + 1;
            } else {
                hi = m2 - 1;
            }
        }
        for b in lo..=hi {
            eval(b);
        }

        let total = validation.len() as f64;
        let (&b, &correct) = correct_at
            .iter()
            .max_by(|(b1, c1), (b2, c2)| c1.cmp(c2).then(b2.cmp(b1)))
            .expect("at least one threshold evaluated");
        self.bleach = Some(b);
        Ok(BleachSelection {
            b,
            accuracy: correct as f64 / total,
            evaluated: correct_at.iter().map(|(&b, &c)| (b, c as f64 / total)).collect(),
        })
    }

    /// Records a bleaching threshold without searching.
    pub fn set_bleach(&mut self, b: u32) -> Result<(), ModelError> {
        if b == 0 {
            return Err(ModelError::ZeroBleach);
        }
        if self.state() == ModelState::Binarized {
            return Err(ModelError::Binarized);
        }
        self.bleach = Some(b);
        Ok(())
    }

    /// A binarized copy: every counter at least `b` becomes a set bit.
    pub fn binarize(&self, b: u32) -> Result<Self, ModelError> {
        if b == 0 {
            return Err(ModelError::ZeroBleach);
        }
        let discriminators = self
            .discriminators
            .iter()
            .map(|d| match d {
                Discriminator::Counting(f) => Ok(Discriminator::Binary(f.iter().map(|f| f.binarize(b)).collect())),
                Discriminator::Binary(_) => Err(ModelError::Binarized),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            discriminators,
            bleach: Some(b),
            ..self.clone_without_filters()
        })
    }

    fn clone_without_filters(&self) -> Self {
        Self {
            config: self.config,
            encoder: self.encoder.clone(),
            mapping: self.mapping.clone(),
            family: self.family.clone(),
            discriminators: Vec::new(),
            bleach: self.bleach,
            labels: self.labels.clone(),
            parallelism: self.parallelism,
        }
    }
}

fn check_encoder(config: &ModelConfig, encoder: &ThermometerEncoder) -> Result<(), ModelError> {
    if encoder.feature_count() != config.feature_count || encoder.bits_per_input() != config.bits_per_input {
        return Err(ModelError::Config(format!(
            "encoder is {} features x {} bits, configuration wants {} x {}",
            encoder.feature_count(),
            encoder.bits_per_input(),
            config.feature_count,
            config.bits_per_input
        )));
    }
    Ok(())
}

/// Index of the largest value, the first one on ties.
pub fn argmax(values: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Minimum addressed counter per (sample, class, filter). A filter answers
/// yes at threshold `b` exactly when its minimum is at least `b`, so accuracy
/// at any `b` follows without touching the filters again.
struct BleachProfile {
    mins: Vec<u32>,
    labels: Vec<usize>,
    classes: usize,
    filters: usize,
}

impl BleachProfile {
    fn build(model: &BthowenModel, data: &LabeledDataset) -> Result<Self, ModelError> {
        let classes = model.config.class_count;
        let filters = model.config.filters_per_discriminator();
        let k = model.config.hashes_per_filter;
        let rows = model.parallelism.map_range(data.len(), |i| {
            let mut s = model.scratch();
            model.fill(data.sample(i), &mut s)?;
            let mut mins = Vec::with_capacity(classes * filters);
            for d in &model.discriminators {
                let Discriminator::Counting(fs) = d else {
                    return Err(ModelError::Binarized);
                };
                mins.extend(fs.iter().zip(s.addresses.chunks_exact(k)).map(|(f, a)| f.min_at(a)));
            }
            Ok(mins)
        });
        let mut mins = Vec::with_capacity(data.len() * classes * filters);
        for row in rows {
            mins.extend(row?);
        }
        Ok(Self {
            mins,
            labels: data.labels().to_vec(),
            classes,
            filters,
        })
    }

    fn correct(&self, b: u32, parallelism: Parallelism) -> usize {
        let per_sample = self.classes * self.filters;
        let hits = parallelism.map_range(self.labels.len(), |i| {
            let row = &self.mins[i * per_sample..(i + 1) * per_sample];
            let responses: Vec<usize> = row
                .chunks_exact(self.filters)
                .map(|c| c.iter().filter(|&&m| m >= b).count())
                .collect();
            argmax(&responses) == self.labels[i]
        });
        hits.into_iter().filter(|&h| h).count()
    }
}
