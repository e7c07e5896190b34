//! Experiment harness behind the `lab` command.

pub mod config;
pub mod experiments;
pub mod report;
pub mod svg;
pub mod trace;

pub use config::{Eta, ExperimentConfig};
pub use experiments::{check, registry, run, CheckReport, Outcome};
