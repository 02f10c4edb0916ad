//! Task metrics, average per-task improvement and the rank statistics used to
//! compare baselines.

mod improvement;
mod metrics;
mod stats;

pub use improvement::{delta_percent, equal_weight_entries, ImprovementEntry, ImprovementReport};
pub use metrics::{
    evaluate, macro_accuracy, score_predictions, task_key, MetricRecord, Split, TaskScore,
};
pub use stats::{
    average_ranks, bonferroni, critical_difference, friedman_nemenyi, mean_std, nemenyi_q,
    wilcoxon_signed_rank, CdReport, WilcoxonResult, WILCOXON_EXACT_MAX, WILCOXON_MIN_N,
};
