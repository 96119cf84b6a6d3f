//! Ensembles, weak errors, sweeps, configuration files and the CLI.

pub mod cli;
pub mod config;
pub mod csv;
pub mod ensemble;
pub mod sweep;

use thiserror::Error;

use crate::oracle::OracleError;

pub use config::{ConfigError, InitialCondition, ModelConfig, RunConfig, SchemeName};
pub use ensemble::{run_ensemble, weak_error, Engine, TrajectoryStats, WeakError};
pub use sweep::{fit_loglog, sweep_dt, sweep_q, SweepPoint, SweepResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error(transparent)]
    Model(crate::models::ModelError),
    #[error(transparent)]
    Schedule(#[from] crate::scheduler::ScheduleError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for configuration and usage errors, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Lattice(_)
            | HarnessError::Model(_)
            | HarnessError::Usage(_) => 2,
            HarnessError::Schedule(e) if e.is_config() => 2,
            HarnessError::Oracle(
                OracleError::StateSpace { .. } | OracleError::NotAdditive(_) | OracleError::Schedule(_),
            ) => 2,
            _ => 1,
        }
    }
}
