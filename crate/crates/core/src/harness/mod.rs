//! Experiment harness: JSON configs, deterministic runners, and emission
//! of run records as CSV or canonical JSON.

mod config;
mod experiments;
mod record;

pub use config::{ExperimentConfig, ExperimentKind, MixingConfig, ToleranceOverrides};
pub use experiments::{
    run_construct_spectrum, run_dominance_ablation, run_estimate, run_experiment,
    run_hermite_cert, run_intersection_experiment, run_invariance, run_rate_experiment,
};
pub use record::{canonical_json, emit, FieldValue, OutputFormat, RunRecord};
