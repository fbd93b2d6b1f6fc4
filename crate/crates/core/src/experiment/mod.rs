//! Top-level orchestration: configuration, realization scheduling,
//! kicked-trajectory simulation, aggregation, and persisted outputs.

mod config;
mod output;
mod run;

pub use config::{ExperimentConfig, InitialCondition, SlopeBand, SCHEMA_VERSION};
pub use output::{require_success, run_experiment, FitCheck, RunReport};
pub use run::{
    independence_check, run_ensembles, run_one_ensemble, simulate_realization, simulate_with_u0,
    FailureRecord, IndependenceReport, IndependenceRow, NormStat, NuSummary, RunResults,
    ViolationRecord,
};
