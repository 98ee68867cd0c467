//! Experiment runner for the sparse-environment branching process
//! laboratory: JSON configuration, reproducible seeding, parallel
//! replication, and deterministic result emission.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{Config, ConfigError};
pub use output::OutputFormat;
pub use runner::{run, ExperimentKind, RunError, RunRequest, RunSummary};
