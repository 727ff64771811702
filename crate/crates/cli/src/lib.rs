//! Batch front-end of the `rte-tomo` toolkit: configuration parsing and
//! command dispatch.

pub mod commands;
pub mod config;

pub use commands::{build_model, run_command, Command, Model, RunError, RunSummary};
pub use config::{parse_config, ConfigError, RunConfig};
