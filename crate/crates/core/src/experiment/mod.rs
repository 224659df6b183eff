//! Configured experiments: parameter sweeps that produce result tables.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{Command, ConfigError, ExperimentConfig};
pub use output::Metadata;
pub use runner::{BerRecord, RunError, StopReason};
