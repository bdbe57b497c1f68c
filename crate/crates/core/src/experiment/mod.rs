//! Config-driven experiment pipeline: data generation, fitting, scoring and output files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ExperimentConfig, GridConfig, ModelConfig};
pub use output::{emit_calibration, emit_outputs};
pub use run::{extrapolate, run_calibration, run_experiment, DatasetOutcome, Extrapolation, ResultBundle};
