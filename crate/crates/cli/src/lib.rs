//! Configuration loading, run orchestration, field export and reports for
//! the `cylflow` command-line tool.

pub mod config;
pub mod export;
pub mod report;
pub mod run;

pub use config::{load_config, ConfigError, RunConfig};
pub use run::{exit, CliError};

#[cfg(doctest)]
mod book;
