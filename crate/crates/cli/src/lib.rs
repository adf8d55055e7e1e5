//! Library surface of the experiment runner, kept separate from the
//! binary so integration tests can drive runs in-process.

pub mod config;
pub mod runner;

pub use config::{ExperimentConfig, Overrides};
pub use runner::{
    format_compare_table, format_grid_table, format_oracle_report, oracle_report, run_compare,
    run_experiment, run_grid, RunArtifacts,
};
