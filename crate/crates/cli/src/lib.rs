//! Experiment runner for the cavity simulator: TOML configuration, parallel
//! sweeps with automatic truncation, and CSV/JSON output.

pub mod config;
pub mod error;
pub mod output;
pub mod runners;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use runners::{run, run_file, RunOptions, RunSummary, OUT_DIR_ENV};
