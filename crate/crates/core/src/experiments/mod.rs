//! Config-driven experiments, metrics and the command-line front end.

pub mod config;
pub mod metrics;
pub mod runs;
pub mod training;

pub use config::ExperimentConfig;
pub mod cli;
