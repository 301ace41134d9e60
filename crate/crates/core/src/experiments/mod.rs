//! Config-driven experiments with deterministic, index-ordered output.
//!
//! A run directory holds `config.json`, `samples.csv`, `summary.json` and
//! `run.json`; only `run.json` carries wall-clock data, so identical configs
//! reproduce `summary.json` byte for byte.

mod config;
mod record;
mod runner;

pub use config::{
    ExperimentConfig, ExperimentKind, ExperimentParams, GridPoint, DEFAULT_N_CAP, DEFAULT_SAMPLE_CAP, GAMMA_MAX,
    SCHEMA_VERSION,
};
pub use record::{load_report, samples_csv, ExperimentRecord, RunReport, SampleFormat, SampleRow, SAMPLES_HEADER};
pub use runner::{
    example_rho, run_experiment, run_gft_continuity, run_mde_validation, run_optimality_demo, run_threshold_sweep,
    run_trace_corr_identity,
};
