//! Experiment harness: configuration, dataset ingestion, synthetic data,
//! and run output.

pub mod config;
pub mod idx;
pub mod output;
pub mod synth;

pub use config::{ExperimentConfig, Mode};
pub use idx::{load_idx_dataset, load_idx_images, load_idx_labels};
pub use synth::synthesize_dataset;
