//! Config-driven experiment runner for skew Jensen-Shannon regularized
//! classifiers: data generation, cross-validated training, α-sweeps,
//! divergence queries and feature projections.

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;

pub use config::{DataSource, ExperimentConfig, SelectMetric};
pub use error::CliError;
pub use harness::{Experiment, FoldResult, SweepResult, SweepRow};
