//! Federated round engine: local training, the aggregation strategies, the
//! byte ledger and run artifacts.

mod aggregate;
mod client;
mod config;
mod experiment;
mod ledger;
mod pretrain;
mod report;
mod strategy;

pub use aggregate::{
    aggregate, check_layouts, fedamp_weights, matfl_weights, mean_vectors, payload_range,
    pseudo_gradient_step, ServerState, AMP_RESCUE_EPS,
};
pub use client::{ClientState, LocalObjective, Regularizer, Schedule};
pub use config::{apply_overrides, ExperimentConfig, ENV_PREFIX};
pub use experiment::{layout_tasks, run_experiment, Federation, RoundResult, RunOutcome};
pub use ledger::{bytes_per_round, CommLedger, LedgerEntry, BYTES_PER_REAL};
pub use pretrain::pretrain;
pub use report::{
    improvement, read_csv, read_ledger, read_rounds, summarize, write_csv, RoundRow, RunReport,
    RunStatus, TargetMetrics, TaskSummary, CONFIG_FILE, LEDGER_FILE, LEDGER_HEADER, REPORT_FILE,
    ROUNDS_FILE, ROUNDS_HEADER,
};
pub use strategy::{Strategy, StrategyId, StrategyParams};
