//! Experiment orchestration for open-loop oscillator controllers: optimize,
//! evaluate, robustness sweeps, metric summaries and bridge checks.

pub mod cli;
pub mod config;
pub mod evaluate;
pub mod optimize;
pub mod results;

use std::fmt;

pub use config::ExperimentConfig;
pub use optimize::{optimize, RunRecord};

/// Runner failures, split by the exit code they map to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// Bad configuration or arguments (exit 1).
    Config(String),
    /// Anything that went wrong while running (exit 2).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    /// Invalid arguments during environment construction are configuration
    /// problems; everything else is a runtime failure.
    pub fn from_env(err: openloop::Error) -> Self {
        match err {
            openloop::Error::InvalidArgument(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }

    pub fn runtime(err: impl fmt::Display) -> Self {
        Failure::Runtime(err.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for Failure {}
