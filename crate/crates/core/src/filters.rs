//! Counting and binary Bloom filters.
//!
//! Every filter keeps one table of `2^m` entries addressed by all `k` hash
//! functions of the model's shared [`H3HashFamily`]. Filters never store the
//! family themselves; callers pass it in, or pass addresses they already
//! computed with [`H3HashFamily::hash_all`].
//!
//! Insertion uses the min-increment rule: of the `k` addressed counters only
//! those holding the current minimum are bumped. A query at threshold `b`
//! succeeds when the smallest addressed counter is at least `b`.

use std::collections::HashMap;

use thiserror::Error;

use crate::hashing::H3HashFamily;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("counter at address {0} would overflow")]
    CounterOverflow(u32),
    #[error("filter has {found} entries but the hash family addresses {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

/// Bloom filter with 32-bit counters in place of bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingBloomFilter {
    counters: Vec<u32>,
}

impl CountingBloomFilter {
    /// An all-zero filter with `entries` counters.
    pub fn new(entries: usize) -> Self {
        Self {
            counters: vec![0; entries],
        }
    }

    pub fn from_counters(counters: Vec<u32>) -> Self {
        Self { counters }
    }

    pub fn entries(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    pub fn max_counter(&self) -> u32 {
        self.counters.iter().copied().max().unwrap_or(0)
    }

    /// Adds `x` using the min-increment rule.
    pub fn add(&mut self, family: &H3HashFamily, x: u64) -> Result<(), FilterError> {
        self.check(family)?;
        let mut addresses = vec![0; family.hash_count()];
        family.hash_all(x, &mut addresses);
        self.add_at(&addresses)
    }

    /// Min-increment over precomputed addresses. An address listed twice is
    /// incremented once.
    pub fn add_at(&mut self, addresses: &[u32]) -> Result<(), FilterError> {
        let min = self.min_at(addresses);
        if min == u32::MAX {
            return Err(FilterError::CounterOverflow(addresses[0]));
        }
        for &a in addresses {
            let c = &mut self.counters[a as usize];
            if *c == min {
                *c += 1;
            }
        }
        Ok(())
    }

    /// Smallest counter among `addresses`.
    #[inline]
    pub fn min_at(&self, addresses: &[u32]) -> u32 {
        addresses
            .iter()
            .map(|&a| self.counters[a as usize])
            .min()
            .unwrap_or(0)
    }

    /// Smallest of the counters addressed by `x`. Never less than the number
    /// of times `x` was added.
    pub fn min_count(&self, family: &H3HashFamily, x: u64) -> u32 {
        let mut addresses = vec![0; family.hash_count()];
        family.hash_all(x, &mut addresses);
        self.min_at(&addresses)
    }

    /// Whether `x` was possibly added at least `b` times.
    pub fn query(&self, family: &H3HashFamily, x: u64, b: u32) -> bool {
        self.min_count(family, x) >= b
    }

    /// Replaces counters below `b` with 0 and the rest with 1.
    pub fn binarize(&self, b: u32) -> BinaryBloomFilter {
        let mut filter = BinaryBloomFilter::new(self.counters.len());
        for (i, &c) in self.counters.iter().enumerate() {
            if c >= b {
                filter.set(i);
            }
        }
        filter
    }

    fn check(&self, family: &H3HashFamily) -> Result<(), FilterError> {
        if family.table_size() != self.counters.len() {
            return Err(FilterError::SizeMismatch {
                expected: family.table_size(),
                found: self.counters.len(),
            });
        }
        Ok(())
    }
}

/// Plain Bloom filter, the inference-time form of a bleached counting filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryBloomFilter {
    entries: usize,
    words: Vec<u64>,
}

impl BinaryBloomFilter {
    pub fn new(entries: usize) -> Self {
        Self {
            entries,
            words: vec![0; entries.div_ceil(64)],
        }
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub(crate) fn set(&mut self, index: usize) {
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// AND of the bits at `addresses`.
    #[inline]
    pub fn query_at(&self, addresses: &[u32]) -> bool {
        addresses.iter().all(|&a| self.get(a as usize))
    }

    pub fn binary_query(&self, family: &H3HashFamily, x: u64) -> bool {
        let mut addresses = vec![0; family.hash_count()];
        family.hash_all(x, &mut addresses);
        self.query_at(&addresses)
    }

    /// Bits packed little-endian into bytes, `ceil(entries / 8)` of them.
    pub fn to_bytes(&self) -> Vec<u8> {
        let len = self.entries.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(len)
            .collect()
    }

    /// Inverse of [`to_bytes`](Self::to_bytes). Bits past `entries` are dropped.
    pub fn from_bytes(entries: usize, bytes: &[u8]) -> Self {
        let mut filter = Self::new(entries);
        for (i, byte) in bytes.iter().enumerate().take(entries.div_ceil(8)) {
            filter.words[i / 8] |= (*byte as u64) << (8 * (i % 8));
        }
        if !entries.is_multiple_of(64) {
            if let Some(last) = filter.words.last_mut() {
                *last &= (1u64 << (entries % 64)) - 1;
            }
        }
        filter
    }
}

/// Exact occurrence counts keyed by the full filter input. Test oracle for
/// the counting filter: a RAM node that never collides.
#[derive(Debug, Clone, Default)]
pub struct ExactCountingFilter {
    counts: HashMap<u64, u32>,
}

impl ExactCountingFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: u64) {
        *self.counts.entry(x).or_insert(0) += 1;
    }

    pub fn count(&self, x: u64) -> u32 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    pub fn query(&self, x: u64, b: u32) -> bool {
        self.count(x) >= b
    }

    pub fn patterns(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}
