//! Experiment runner behind the `xlamaml` binary.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, FlagOverrides, Override};
pub use run::{prepare, run, run_prepared, Prepared, RunResults};
