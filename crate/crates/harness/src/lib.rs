//! Experiment harness for `tsb-core`: JSON configs, seeded runs with CSV and
//! JSON artifacts, parameter sweeps, certificate checks and the three
//! figure pipelines. The `tsb` binary is a thin CLI over this crate.

pub mod certify;
pub mod config;
pub mod error;
pub mod figures;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use run::{run_experiment, RunArtifacts};
