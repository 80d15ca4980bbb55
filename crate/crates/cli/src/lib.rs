//! Configuration, dataset I/O and experiment drivers behind the `dpmean`
//! command.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod selftest;
pub mod tailbench;

pub use config::{EstimateConfig, EstimatorKind, ExperimentConfig, Grid, TailbenchConfig};
pub use experiment::{run_estimator, run_experiment, TrialRow};
pub use tailbench::{run_tailbench, TailRow};
