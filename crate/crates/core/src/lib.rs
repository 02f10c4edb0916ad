//! Deterministic desk-scale simulator for federated multi-task learning.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalstat;
pub mod fedcore;
pub mod models;
pub mod mtlopt;
pub mod numkernel;
pub mod synthdata;

pub use error::{FmtlError, Result};

pub use evalstat::{CdReport, Split};
pub use fedcore::{ExperimentConfig, RunReport, RunStatus, Strategy, StrategyId, StrategyParams};
pub use models::ArchKind;
pub use numkernel::SegmentedParams;
pub use synthdata::{Domain, ScenarioId, TaskKind};
