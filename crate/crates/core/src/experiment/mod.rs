//! Seeded experiment grid, results table, statistics and reporting.

mod config;
mod grid;
mod report;
mod results;
pub mod stats;
mod trial;

pub use config::{ClockMode, ExperimentConfig, LossKind, MaeScale, Precision};
pub use grid::{run_grid, GridRun};
pub use report::{
    build_report, emit_report, measure_overhead, render, render_overhead, BlockBy, DatasetReport,
    MethodSummary, Overhead, ReportFormat, ReportOptions, StatReport,
};
pub use results::{ResultRow, ResultTable, TrialStatus, RESULTS_HEADER};
pub use stats::{
    average_ranks, chi_square_sf, confidence_interval, friedman_exact_p, friedman_test, mae,
    wilcoxon_exact, FriedmanResult,
};
pub use trial::{run_trial, run_trial_on, trial_seed, EpochLog, TrialResult};
