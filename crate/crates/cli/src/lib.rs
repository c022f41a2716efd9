//! Config-driven runner for the Kelvin-Voigt damped wave experiments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod presets;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{run, RunError, RunOptions, RunSummary};
