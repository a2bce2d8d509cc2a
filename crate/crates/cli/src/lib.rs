//! Command-line front end for `quatnet`: configuration, checkpoints and the
//! `train`, `eval`, `gradcheck`, `inspect` and `synth` commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

pub use checkpoint::Checkpoint;
pub use config::{Precision, RunConfig};
pub use error::{CliError, CliResult};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "QUATNET_THREADS";

/// Worker threads requested by the environment; 1 when unset.
pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
    }
}
