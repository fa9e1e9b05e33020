//! Experiment harness, file formats, and command-line interface for FairSHAP
//! fairness preprocessing.

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod experiment;
pub mod persist;
pub mod report;

pub use config::{ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_sweep, ExperimentReport};
