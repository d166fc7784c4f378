//! Strategy runners, the correlation sweep, log replay and table output.

mod config;
mod output;
mod replay;
mod runner;
mod sweep;

pub use config::{ConfigFile, SweepSpec};
pub use output::{
    emit_outputs, write_aggregate, write_runs, AGGREGATE_CSV, AGGREGATE_HEADER, LOSS_PRICE_CSV,
    PLOT_SCRIPT, RUNS_CSV, SAVINGS_CSV,
};
pub use replay::{replay, LogCrowd};
pub use runner::{
    crowd_pipeline, export_log, machine_only, run_strategy, CrowdOutcome, RunMetrics, RunOutcome,
    SimWorld, Strategy,
};
pub use sweep::{
    aggregate, savings, sweep, sweep_strategies, world_seed, AggregateRow, SavingsRow, SweepResult,
};
