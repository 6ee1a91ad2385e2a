//! Experiment configuration, synthetic workloads and the batch pipeline
//! behind the `bursthads` binary.

pub mod config;
pub mod pipeline;
pub mod workload;

pub use config::{ConfigError, ExperimentConfig, Strategy};
pub use pipeline::{build_map, derive_seed, run_experiment, run_single, write_artifacts, ExperimentResult};
