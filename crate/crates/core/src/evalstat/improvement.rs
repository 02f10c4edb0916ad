use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};

/// One task's contribution to the average per-task improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementEntry {
    pub task: String,
    pub m_fed: f64,
    pub m_target: f64,
    pub lower_is_better: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub entries: Vec<ImprovementEntry>,
    pub delta_percent: f64,
}

impl ImprovementReport {
    pub fn new(entries: Vec<ImprovementEntry>) -> Result<Self> {
        let delta_percent = delta_percent(&entries)?;
        Ok(ImprovementReport {
            entries,
            delta_percent,
        })
    }
}

/// Weighted average relative improvement over the target, in percent. A
/// drop in a lower-is-better metric counts as an improvement.
pub fn delta_percent(entries: &[ImprovementEntry]) -> Result<f64> {
    let total_w: f64 = entries.iter().map(|e| e.weight).sum();
    if entries.iter().any(|e| e.weight < 0.0) || !(total_w > 0.0) {
        return Err(FmtlError::Argument(
            "improvement weights must be non-negative with a positive sum".into(),
        ));
    }
    let mut acc = 0.0;
    for e in entries {
        if e.m_target == 0.0 {
            return Err(FmtlError::Domain(format!(
                "target metric for `{}` is zero",
                e.task
            )));
        }
        let sign = if e.lower_is_better { -1.0 } else { 1.0 };
        acc += sign * e.weight * (e.m_fed - e.m_target) / e.m_target;
    }
    Ok(acc / total_w * 100.0)
}

/// Equal-weight entries from parallel slices.
pub fn equal_weight_entries(
    tasks: &[String],
    fed: &[f64],
    target: &[f64],
    lower_is_better: &[bool],
) -> Vec<ImprovementEntry> {
    tasks
        .iter()
        .zip(fed)
        .zip(target)
        .zip(lower_is_better)
        .map(|(((t, f), m), l)| ImprovementEntry {
            task: t.clone(),
            m_fed: *f,
            m_target: *m,
            lower_is_better: *l,
            weight: 1.0,
        })
        .collect()
}
