//! Experiment runner and acceptance suite for the `sublin` toolkit.

pub mod config;
pub mod error;
pub mod run;
pub mod verify;

pub use config::{parse_config, ExperimentConfig, Overrides, Params, Resolved, Subcommand};
pub use error::{CliError, CliResult};
pub use run::{run, write_outputs, Outcome, RunReport};
pub use verify::{run_check, run_suite, CheckOutcome, SuiteConfig};
