//! Experiment driver for `espd-core`: config ingestion, seeded runs, sweeps
//! and CSV/JSON result files.

pub mod config;
pub mod runner;

pub use config::{load_config, parse_config, Command, ConfigError, RunConfig};
pub use runner::{run, RunError, RunRecord, RunReport};
