//! Experiment harness: config files, seeded runs, sweeps and result comparison.

pub mod compare;
pub mod config;
pub mod presets;
pub mod runner;

use std::path::PathBuf;

use thiserror::Error;

pub use compare::{compare, Comparison};
pub use config::{parse_config, ConfigError, ExperimentConfig, Scale, Scenario};
pub use runner::{execute, expand, run_point, ExecuteOptions, RunPoint, RunResult, SweepOutcome, METRICS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Workload(#[from] crate::workload::WorkloadError),
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
    #[error("{0}")]
    Compare(String),
    #[error("{0}")]
    Run(String),
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_config(&text)?)
}
