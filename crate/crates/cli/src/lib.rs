//! Subcommands of the `ftjnf-kd` runner.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{FlagOverrides, RunConfig, ENV_PREFIX};
pub use error::CliError;
