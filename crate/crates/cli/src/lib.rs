//! Experiment harness behind the `fbplab` binary: configuration, run
//! directories with hashed manifests, subcommands and verification suites.

pub mod commands;
pub mod config;
pub mod rundir;
pub mod suites;

use thiserror::Error;

pub use commands::{execute, Command, Outcome};
pub use config::Config;
pub use rundir::{OutputEntry, RunDir, RunRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Module { context: String, message: String },
}

impl CliError {
    pub fn module(context: &str, err: impl std::fmt::Display) -> Self {
        Self::Module {
            context: context.to_string(),
            message: err.to_string(),
        }
    }
}

/// Process exit status: 0 success, 2 failed assertions, 1 errors.
pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(o) if o.passed => 0,
        Ok(_) => 2,
        Err(_) => 1,
    }
}

/// Sizes the global rayon pool from `FBPLAB_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("FBPLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
