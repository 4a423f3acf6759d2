//! Command-line orchestration for the rpme experiment families.
//!
//! Every subcommand reads a [`config::RunConfig`], runs the corresponding
//! analysis, and writes into the output directory:
//!
//! ```text
//! <out>/manifest.json
//! <out>/reports/<subcommand>.csv
//! <out>/paths/path_<id>.rpme1      (simulate, malliavin)
//! <out>/transforms/table.csv       (transform-demo)
//! ```
//!
//! Exit codes: 0 success, 1 a hard-bound report failed, 2 missing file or
//! other I/O failure, 3 configuration error, 4 numerical abort.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

pub use commands::{run_command, Subcommand};
pub use config::{load_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Missing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration key `{key}`: {msg}")]
    Schema { key: String, msg: String },
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] rpme::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing { .. } | CliError::Io(_) => 2,
            CliError::Schema { .. } => 3,
            CliError::Core(e) => match e {
                rpme::Error::NonFinite { .. } => 4,
                rpme::Error::Io(_) => 2,
                _ => 3,
            },
        }
    }
}
