//! Gaussian thermometer encoding.
//!
//! Each feature is modelled as a normal distribution fitted to the training
//! data. For a `t`-bit encoding the fitted Gaussian is cut into `t + 1`
//! regions of equal probability and the `t` cut points become the feature's
//! thresholds. A value turns on bit `i` of its group when it lies strictly
//! above threshold `i`, so every group reads as a run of ones followed by
//! zeros.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("need at least 2 training samples to fit an encoder, got {0}")]
    TooFewSamples(usize),
    #[error("bits per input must be at least 1")]
    ZeroBits,
    #[error("samples must have at least one feature")]
    NoFeatures,
    #[error("sample {sample} has {found} features, expected {expected}")]
    RaggedSample { sample: usize, expected: usize, found: usize },
    #[error("sample {sample}, feature {feature} is not finite")]
    NonFinite { sample: usize, feature: usize },
    #[error("expected {expected} feature values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("threshold table has {found} values, expected {expected}")]
    ThresholdCount { expected: usize, found: usize },
    #[error("thresholds for feature {0} are not finite and non-decreasing")]
    UnsortedThresholds(usize),
}

/// Per-feature threshold table turning real-valued samples into bit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermometerEncoder {
    bits_per_input: usize,
    feature_count: usize,
    /// Row-major `feature_count x bits_per_input`.
    thresholds: Vec<f64>,
}

impl ThermometerEncoder {
    /// Fits Gaussian thresholds to `samples`, one row per sample.
    ///
    /// Statistics are per feature, with the population standard deviation.
    pub fn fit<'a, I>(samples: I, bits_per_input: usize) -> Result<Self, EncodingError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if bits_per_input == 0 {
            return Err(EncodingError::ZeroBits);
        }
        let mut count = 0usize;
        let mut sums: Vec<f64> = Vec::new();
        let mut rows: Vec<&[f64]> = Vec::new();
        for (index, row) in samples.into_iter().enumerate() {
            if index == 0 {
                if row.is_empty() {
                    return Err(EncodingError::NoFeatures);
                }
                sums = vec![0.0; row.len()];
            }
            if row.len() != sums.len() {
                return Err(EncodingError::RaggedSample {
                    sample: index,
                    expected: sums.len(),
                    found: row.len(),
                });
            }
            for (feature, (&value, sum)) in row.iter().zip(sums.iter_mut()).enumerate() {
                if !value.is_finite() {
                    return Err(EncodingError::NonFinite { sample: index, feature });
                }
                *sum += value;
            }
            rows.push(row);
            count += 1;
        }
        if count < 2 {
            return Err(EncodingError::TooFewSamples(count));
        }

        let n = count as f64;
        let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let mut squares = vec![0.0; means.len()];
        for row in &rows {
            for ((value, mean), sq) in row.iter().zip(&means).zip(squares.iter_mut()) {
                let d = value - mean;
                *sq += d * d;
            }
        }

        let quantiles = standard_quantiles(bits_per_input);
        let mut thresholds = Vec::with_capacity(means.len() * bits_per_input);
        for (mean, sq) in means.iter().zip(&squares) {
            let std_dev = (sq / n).sqrt();
            thresholds.extend(quantiles.iter().map(|z| mean + std_dev * z));
        }
        Ok(Self {
            bits_per_input,
            feature_count: means.len(),
            thresholds,
        })
    }

    /// Rebuilds an encoder from a stored threshold table.
    pub fn from_thresholds(
        feature_count: usize,
        bits_per_input: usize,
        thresholds: Vec<f64>,
    ) -> Result<Self, EncodingError> {
        if bits_per_input == 0 {
            return Err(EncodingError::ZeroBits);
        }
        if feature_count == 0 {
            return Err(EncodingError::NoFeatures);
        }
        let expected = feature_count * bits_per_input;
        if thresholds.len() != expected {
            return Err(EncodingError::ThresholdCount {
                expected,
                found: thresholds.len(),
            });
        }
        for (feature, row) in thresholds.chunks_exact(bits_per_input).enumerate() {
            let sorted = row.iter().all(|v| v.is_finite()) && row.windows(2).all(|w| w[0] <= w[1]);
            if !sorted {
                return Err(EncodingError::UnsortedThresholds(feature));
            }
        }
        Ok(Self {
            bits_per_input,
            feature_count,
            thresholds,
        })
    }

    pub fn bits_per_input(&self) -> usize {
        self.bits_per_input
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Length of an encoded sample, `feature_count * bits_per_input`.
    pub fn encoded_len(&self) -> usize {
        self.feature_count * self.bits_per_input
    }

    /// Thresholds of one feature, ascending.
    pub fn thresholds(&self, feature: usize) -> &[f64] {
        let t = self.bits_per_input;
        &self.thresholds[feature * t..(feature + 1) * t]
    }

    /// The whole table, row-major.
    pub fn threshold_table(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn encode(&self, sample: &[f64]) -> Result<Vec<bool>, EncodingError> {
        let mut bits = vec![false; self.encoded_len()];
        self.encode_into(sample, &mut bits)?;
        Ok(bits)
    }

    /// Writes the encoding of `sample` into `out[..encoded_len()]`.
    pub fn encode_into(&self, sample: &[f64], out: &mut [bool]) -> Result<(), EncodingError> {
        if sample.len() != self.feature_count {
            return Err(EncodingError::LengthMismatch {
                expected: self.feature_count,
                found: sample.len(),
            });
        }
        let t = self.bits_per_input;
        for ((value, row), group) in sample
            .iter()
            .zip(self.thresholds.chunks_exact(t))
            .zip(out.chunks_exact_mut(t))
        {
            for (bit, threshold) in group.iter_mut().zip(row) {
                *bit = value > threshold;
            }
        }
        Ok(())
    }
}

/// Standard-normal cut points splitting the distribution into `t + 1`
/// equal-probability regions.
pub fn standard_quantiles(t: usize) -> Vec<f64> {
    let regions = (t + 1) as f64;
    (1..=t).map(|i| inverse_normal_cdf(i as f64 / regions)).collect()
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed by
/// one Halley step against `erfc`, which brings the error down to a few ulps.
/// Returns infinities at 0 and 1 and NaN outside `[0, 1]`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}
