//! Experiment harness for `regagent-core`: datasets and their category split,
//! evaluation sweeps, iteration traces, ablation grids and CSV output, plus
//! the `regagent` command-line interface.

pub mod ablation;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, Protocol, RewardSpec};
pub use error::{BenchError, Result};
