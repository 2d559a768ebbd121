//! Experiment runner for `hmx-core`: configuration, checks, reports and plots.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

pub use commands::{run, Cli, Command, Outcome};
pub use config::{ConfigArgs, ExperimentConfig, Tolerances};
pub use error::CliError;
