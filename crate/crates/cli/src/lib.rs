//! Configuration-driven experiments.
//!
//! An [`ExperimentConfig`] names the experiment, the model and its
//! parameters. [`run`] validates it, runs the experiment on the current
//! rayon pool and returns CSV tables plus a [`RunManifest`]; [`write_bundle`]
//! puts them on disk.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use output::{write_bundle, Bundle, RunManifest, Table};
pub use runner::{run, run_with_workers};
