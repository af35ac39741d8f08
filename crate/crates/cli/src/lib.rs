//! Configuration, persistence and command implementations behind the `npe`
//! binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod series;
pub mod snapshot;

use thiserror::Error;

pub use config::{ConfigError, RunConfig};
pub use snapshot::SnapshotError;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Snapshot(#[from] SnapshotError),

    #[error(transparent)]
    Series(#[from] series::SeriesError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] npe_core::Error),

    #[error("invariant check failed at t = {time}: {detail}")]
    Invariant { time: f64, detail: String },

    #[error("sweep incomplete: {0}")]
    PartialSweep(String),
}

impl CliError {
    /// Process exit status: 2 configuration, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        use npe_core::Error as E;
        match self {
            CliError::Config(ConfigError::Read { .. }) => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Snapshot(_) | CliError::Series(_) | CliError::Io { .. } => EXIT_IO,
            CliError::Solver(
                E::InvalidGrid(_) | E::InvalidParams(_) | E::InvalidArgument(_) | E::NegativeScale(_),
            ) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Invariant { .. } | CliError::PartialSweep(_) => EXIT_NUMERICAL,
        }
    }
}

/// Sizes the global thread pool from `NPE_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("NPE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("NPE_THREADS must be a positive integer, got `{raw}`")))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
