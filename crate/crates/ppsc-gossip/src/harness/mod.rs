//! Command-line front end: configuration files, experiment drivers, result
//! tables and the dataset loader behind the `ppsc-gossip` binary.
//!
//! Everything here is a thin layer over the library — each subcommand
//! resolves a [`config::ExperimentConfig`], calls the same planning and run
//! functions any other caller would, and writes CSV. The binary in
//! `main.rs` is one line; keeping the dispatch here makes it testable
//! without spawning processes.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod mnist;
pub mod table;

pub use config::{CliOverrides, ExperimentConfig, Resolved};
pub use mnist::{load_mnist_idx, MnistData, MnistError};
pub use table::{ResultRow, ResultTable};

use std::path::PathBuf;

use thiserror::Error;

/// Anything the front end can fail with, tagged by exit code: configuration
/// and validation problems exit with 1, failures during a run with 2.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config file {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("config key '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error(
        "override '{key}' = {value} is below the planned bound {bound}; \
         pass --force to acknowledge running outside the guarantee"
    )]
    OverrideBelowBound { key: String, value: f64, bound: f64 },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn runtime(message: impl std::fmt::Display) -> Self {
        HarnessError::Runtime(message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. }
            | HarnessError::Invalid { .. }
            | HarnessError::OverrideBelowBound { .. } => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}
