//! Weightless neural network classifiers built from counting Bloom filters.
//!
//! Inputs are thermometer-encoded against Gaussian quantiles, scattered over
//! filters by a seeded permutation and hashed with a shared H3 family. A
//! model is trained in one pass, given a bleaching threshold on held-out data
//! and binarized for inference.
//!
//! ```
//! use bthowen::{pipeline, LabelDictionary, LabeledDataset};
//!
//! let features: Vec<f64> = (0..60).map(|i| (i % 3) as f64 + (i % 7) as f64 * 0.05).collect();
//! let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
//! let data = LabeledDataset::new(features, 1, labels, LabelDictionary::numeric(3)).unwrap();
//!
//! let config = pipeline::config_for(&data, 4, 4, 64, 2, 7);
//! let trained = pipeline::train(config, &data, Default::default()).unwrap();
//! assert!(trained.binarized.evaluate(&data, None).unwrap() > 0.9);
//! ```

pub mod cli;
pub mod datasets;
pub mod encoding;
pub mod filters;
pub mod hashing;
pub mod model;
pub mod parallel;
pub mod persistence;
pub mod pipeline;
pub mod presets;
pub mod sweep;

pub use datasets::{LabelDictionary, LabeledDataset};
pub use encoding::ThermometerEncoder;
pub use filters::{BinaryBloomFilter, CountingBloomFilter, ExactCountingFilter};
pub use hashing::H3HashFamily;
pub use model::{BthowenModel, ModelConfig, ModelState};
pub use parallel::Parallelism;
