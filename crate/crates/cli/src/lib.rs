//! Command-line runner: reads a TOML configuration and CSV data, then fits
//! the full model, enumerates the model space, predicts by model averaging
//! or runs a named experiment. Every report records the configuration
//! hash, seed, library version and the method behind each number.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use config::{Mode, Overrides, Resolved, RunConfig};
pub use error::{CliError, CliResult};

use std::path::{Path, PathBuf};

/// Load the configuration, apply overrides and run it.
pub fn run(config: &Path, over: &Overrides) -> CliResult<Vec<PathBuf>> {
    let resolved = config::load(config, over)?;
    commands::execute(&resolved)
}
