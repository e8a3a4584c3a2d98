//! End-to-end training: hold out a validation slice, fit the encoder, train
//! in one pass, pick the bleaching threshold and binarize.

use crate::datasets::LabeledDataset;
use crate::encoding::ThermometerEncoder;
use crate::model::{BleachSelection, BthowenModel, ModelConfig, ModelError};
use crate::parallel::Parallelism;

/// Fraction of the training set held out to choose the bleaching threshold.
pub const DEFAULT_HOLDOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub holdout: f64,
    pub parallelism: Parallelism,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            holdout: DEFAULT_HOLDOUT,
            parallelism: Parallelism::default(),
        }
    }
}

/// Both forms of a trained model and how its threshold was chosen.
#[derive(Debug, Clone)]
pub struct Trained {
    /// Counting model with the selected threshold recorded.
    pub counting: BthowenModel,
    pub binarized: BthowenModel,
    pub selection: BleachSelection,
}

/// Builds a configuration whose feature and class counts come from `data`.
pub fn config_for(
    data: &LabeledDataset,
    bits_per_input: usize,
    inputs_per_filter: usize,
    entries_per_filter: usize,
    hashes_per_filter: usize,
    seed: u64,
) -> ModelConfig {
    ModelConfig {
        feature_count: data.feature_count(),
        class_count: data.class_count(),
        bits_per_input,
        inputs_per_filter,
        entries_per_filter,
        hashes_per_filter,
        seed,
    }
}

/// Shuffles `data` with the model seed, trains on the first part and selects
/// the bleaching threshold on the last `holdout` fraction. The encoder is fit
/// to the training part only.
pub fn train(config: ModelConfig, data: &LabeledDataset, options: TrainOptions) -> Result<Trained, ModelError> {
    config.validate()?;
    if !(options.holdout > 0.0 && options.holdout < 1.0) {
        return Err(ModelError::Config(format!(
            "holdout fraction must be in (0, 1), got {}",
            options.holdout
        )));
    }
    if data.feature_count() != config.feature_count {
        return Err(ModelError::FeatureCount {
            expected: config.feature_count,
            found: data.feature_count(),
        });
    }
    let (fit, validation) = data.split(1.0 - options.holdout, config.seed);
    let encoder = ThermometerEncoder::fit(fit.samples(), config.bits_per_input)?;
    let mut model = BthowenModel::new(config, encoder)?.with_labels(data.dictionary().clone())?;
    model.set_parallelism(options.parallelism);
    model.train(&fit)?;
    let selection = model.select_bleach(&validation)?;
    let binarized = model.binarize(selection.b)?;
    Ok(Trained {
        counting: model,
        binarized,
        selection,
    })
}
