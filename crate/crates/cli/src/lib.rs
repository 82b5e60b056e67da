//! Experiment orchestration for the `bregvr` command: configuration,
//! certification, replicated runs and reproducible trace output.

pub mod config;
pub mod experiment;

use std::io;
use std::path::Path;

use thiserror::Error;

pub use config::{ExperimentConfig, OracleChoice, Overrides, SolverSection};
pub use experiment::{certify, oracle, prepare, run_experiment, Certificate, CertifyReport, RunReport, Summary};

pub const EXIT_CERTIFICATE: i32 = 2;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("certificate rejected: {0}")]
    Certificate(String),
    #[error("saddle oracle failed: {0}")]
    Oracle(bregvr::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Certificate(_) => EXIT_CERTIFICATE,
            CliError::Oracle(_) | CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }
}
