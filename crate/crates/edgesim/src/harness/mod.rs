//! Experiment orchestration: config parsing and validation, end-to-end run
//! execution with self-describing artifacts, run comparison with plot-data
//! export, and offline forecaster training.

pub mod compare;
pub mod config;
pub mod run;

use thiserror::Error;

pub use compare::{acceptance_bounds, compare_runs, peak_window_stats, BoundCheck, ComparisonReport, PeakWindowStats};
pub use config::{parse_config, ClusterConfig, ConfigError, ExperimentConfig, WorkloadSpec};
pub use run::{
    load_run_artifacts, run_experiment, sha256_file, CsvTraceSink, RunArtifacts, DECISIONS_HEADER,
    REQUESTS_HEADER, TRACE_HEADER,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("horizon mismatch: {a} s vs {b} s")]
    HorizonMismatch { a: f64, b: f64 },
    #[error("artifact error: {0}")]
    Artifact(String),
}
