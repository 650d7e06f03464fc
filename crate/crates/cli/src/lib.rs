//! Experiment runner for the `verspace` library: builds the dataset, feature
//! map and version-space sampler for a JSON-configured task and writes CSV
//! results with a `run.json` record.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod record;

pub use config::{ExperimentConfig, Task};
pub use error::CliError;
pub use pipeline::{execute, Artifact, Execution};
pub use record::{run_experiment, RunRecord};
