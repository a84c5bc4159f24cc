//! Config-driven experiment runner: parse a config, run it, emit tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Format, Mode};
pub use output::{emit_results, OutputFormat, ResultBundle};
pub use run::{run_experiment, CliError};
