//! Monte-Carlo harness: configuration, seeded trials, sweeps and result
//! files.

pub mod config;
pub mod harness;
pub mod output;

pub use config::{parse_assignment, Axis, GammaPsi, SimConfig};
pub use harness::{
    generate_scenario, max_nulling_residual, mean_stderr, run_sweep, run_trial, run_trials, trial_rng, Figure, Gap,
    ResultRow, SchemeResult, SweepResult, SweepSpec, TrialOutcome,
};
pub use output::{read_csv, read_json, write_results, OutputFormat, ResultDocument};
