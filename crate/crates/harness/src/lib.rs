//! Experiment harness: configuration and presets, Monte Carlo runner,
//! brute-force oracles and result emission.

pub mod config;
pub mod emit;
pub mod oracle;
pub mod presets;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, ExperimentId};
pub use runner::{run_experiment, ResultsTable};
