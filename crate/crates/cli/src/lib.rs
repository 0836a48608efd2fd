//! Batch front end: experiment configs in, `report.json` and CSV curves out.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, Example5Params, Experiment, ExperimentConfig};
pub use output::{Verdict, EXIT_ERROR, EXIT_PASS, EXIT_VIOLATION};
pub use run::{run_config, RunOutcome};
