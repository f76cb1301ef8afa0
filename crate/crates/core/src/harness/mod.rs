//! Experiment orchestration: configuration, Monte Carlo execution, rate and
//! tail estimates, and report files.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{CodeConfig, ConfigError, EpsSpec, ExperimentConfig, GraphSpec, OutputSpec, Prepared, X0Spec};
pub use experiment::{
    clopper_pearson, estimate_tail_probability, record_trial, run_experiment, run_prepared, run_trial, tail_from_counts,
    Experiment, HarnessError, RateEstimate, RateRow, TailEstimate, TrialOutcome, TrialSummary,
};
pub use report::{emit_report, write_rates_csv, write_runs_csv, ExperimentReport, GraphInfo, Timing};
