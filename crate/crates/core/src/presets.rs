//! Reference configurations for the nine benchmark datasets, with their
//! published model sizes and test accuracies.

use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Directory name of the dataset under the data root.
    pub dataset: &'static str,
    pub feature_count: usize,
    pub class_count: usize,
    pub bits_per_input: usize,
    pub inputs_per_filter: usize,
    pub entries_per_filter: usize,
    pub hashes_per_filter: usize,
    /// Published model size as printed, in KiB.
    pub size_kib: &'static str,
    pub accuracy: f64,
}

impl Preset {
    pub fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            feature_count: self.feature_count,
            class_count: self.class_count,
            bits_per_input: self.bits_per_input,
            inputs_per_filter: self.inputs_per_filter,
            entries_per_filter: self.entries_per_filter,
            hashes_per_filter: self.hashes_per_filter,
            seed,
        }
    }
}

#[allow(clippy::too_many_arguments)]
const fn preset(
    name: &'static str,
    dataset: &'static str,
    shape: (usize, usize),
    t: usize,
    n: usize,
    entries: usize,
    k: usize,
    size_kib: &'static str,
    accuracy: f64,
) -> Preset {
    Preset {
        name,
        dataset,
        feature_count: shape.0,
        class_count: shape.1,
        bits_per_input: t,
        inputs_per_filter: n,
        entries_per_filter: entries,
        hashes_per_filter: k,
        size_kib,
        accuracy,
    }
}

pub const PRESETS: [Preset; 11] = [
    preset("MNIST-Small", "mnist", (784, 10), 2, 28, 1024, 2, "70.0", 0.934),
    preset("MNIST-Medium", "mnist", (784, 10), 3, 28, 2048, 2, "210", 0.943),
    preset("MNIST-Large", "mnist", (784, 10), 6, 49, 8192, 4, "960", 0.952),
    preset("Ecoli", "ecoli", (7, 8), 10, 10, 128, 2, "0.875", 0.875),
    preset("Iris", "iris", (4, 3), 3, 2, 128, 1, "0.281", 0.980),
    preset("Letter", "letter", (16, 26), 15, 20, 2048, 4, "78.0", 0.900),
    preset("Satimage", "satimage", (36, 6), 8, 12, 512, 4, "9.00", 0.880),
    preset("Shuttle", "shuttle", (9, 7), 9, 27, 1024, 2, "2.63", 0.999),
    preset("Vehicle", "vehicle", (18, 4), 16, 16, 256, 3, "2.25", 0.762),
    preset("Vowel", "vowel", (10, 11), 15, 15, 256, 4, "3.44", 0.900),
    preset("Wine", "wine", (13, 3), 9, 13, 128, 3, "0.422", 0.983),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}
