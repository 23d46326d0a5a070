//! Configuration, dispatch and output for `fedpne` experiments.
//!
//! A run reads one TOML config, fans the listed seeds out in parallel and
//! writes into the output directory:
//!
//! * `config.resolved.toml`, the config with every default filled in;
//! * `trace_seed<N>.csv`, one row per pull;
//! * `comm_seed<N>.csv`, one row per phase;
//! * `summary.csv`, mean and standard deviation of the average cumulative
//!   regret across seeds.

pub mod commands;
pub mod config;
pub mod emit;
pub mod plot;

pub use commands::{oracle, plot, run, CliError, RunOverrides};
pub use config::{load_config, ExperimentConfig, RawConfig};
