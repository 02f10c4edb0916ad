use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ledger::LedgerEntry;
use crate::error::{FmtlError, Result};
use crate::evalstat::{delta_percent, mean_std, ImprovementEntry, ImprovementReport, Split};

pub const CONFIG_FILE: &str = "config.json";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const REPORT_FILE: &str = "report.json";

/// One metric of one client at one evaluation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub client_id: usize,
    pub task: String,
    pub split: Split,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    NullBaseline,
}

/// Client mean and spread of one task metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub split: Split,
    pub metric_name: String,
    pub lower_is_better: bool,
    pub mean: f64,
    pub std: f64,
    pub clients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub run_id: String,
    pub metrics: Vec<TaskSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub status: RunStatus,
    pub null_reason: Option<String>,
    pub scenario: String,
    pub arch: String,
    pub strategy: String,
    pub seed: u64,
    pub rounds: usize,
    /// Round of the metrics in `metrics`.
    pub final_round: usize,
    pub metrics: Vec<TaskSummary>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub bytes_total: u64,
    pub target: Option<TargetMetrics>,
    pub delta_g_percent: Option<f64>,
    pub delta_p_percent: Option<f64>,
}

impl RunReport {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(run_dir.join(REPORT_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(run_dir.join(REPORT_FILE), text)?;
        Ok(())
    }

    /// Adds Δ% against `target` for both splits.
    pub fn attach_target(&mut self, target: &RunReport) -> Result<()> {
        self.delta_g_percent =
            Some(improvement(&self.metrics, &target.metrics, Split::G)?.delta_percent);
        self.delta_p_percent =
            Some(improvement(&self.metrics, &target.metrics, Split::P)?.delta_percent);
        self.target = Some(TargetMetrics {
            run_id: target.run_id.clone(),
            metrics: target.metrics.clone(),
        });
        Ok(())
    }
}

/// Per-(split, task) client mean and std of `rows` at `round`.
pub fn summarize(rows: &[RoundRow], round: usize) -> Vec<TaskSummary> {
    let mut groups: BTreeMap<(Split, String), (String, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.round == round) {
        groups
            .entry((r.split, r.task.clone()))
            .or_insert_with(|| (r.metric_name.clone(), Vec::new()))
            .1
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((split, task), (metric_name, values))| {
            let (mean, std) = mean_std(&values);
            TaskSummary {
                lower_is_better: metric_name != "macro_accuracy",
                task,
                split,
                metric_name,
                mean,
                std,
                clients: values.len(),
            }
        })
        .collect()
}

/// Equal-weight Δ% of `fed` over `target` on one split. Both must report the
/// same task set.
pub fn improvement(
    fed: &[TaskSummary],
    target: &[TaskSummary],
    split: Split,
) -> Result<ImprovementReport> {
    let pick = |s: &[TaskSummary]| -> BTreeMap<String, TaskSummary> {
        s.iter()
            .filter(|m| m.split == split)
            .map(|m| (m.task.clone(), m.clone()))
            .collect()
    };
    let (f, t) = (pick(fed), pick(target));
    let missing: Vec<&String> = t
        .keys()
        .filter(|k| !f.contains_key(*k))
        .chain(f.keys().filter(|k| !t.contains_key(*k)))
        .collect();
    if !missing.is_empty() || t.is_empty() {
        return Err(FmtlError::TaskMismatch(format!(
            "task sets differ on split {split}; unmatched tasks: {missing:?}"
        )));
    }
    let entries: Vec<ImprovementEntry> = t
        .values()
        .map(|tm| ImprovementEntry {
            task: tm.task.clone(),
            m_fed: f[&tm.task].mean,
            m_target: tm.mean,
            lower_is_better: tm.lower_is_better,
            weight: 1.0,
        })
        .collect();
    let delta = delta_percent(&entries)?;
    Ok(ImprovementReport {
        entries,
        delta_percent: delta,
    })
}

fn csv_err(e: csv::Error) -> FmtlError {
    FmtlError::Format(e.to_string())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(path)?);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub const ROUNDS_HEADER: [&str; 6] = [
    "round",
    "client_id",
    "task",
    "split",
    "metric_name",
    "value",
];
pub const LEDGER_HEADER: [&str; 3] = ["round", "bytes_up", "bytes_down"];

pub fn read_rounds(run_dir: &Path) -> Result<Vec<RoundRow>> {
    read_csv(&run_dir.join(ROUNDS_FILE))
}

pub fn read_ledger(run_dir: &Path) -> Result<Vec<LedgerEntry>> {
    read_csv(&run_dir.join(LEDGER_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(
        round: usize,
        client: usize,
        task: &str,
        split: Split,
        metric: &str,
        value: f64,
    ) -> RoundRow {
        RoundRow {
            round,
            client_id: client,
            task: task.into(),
            split,
            metric_name: metric.into(),
            value,
        }
    }

    #[test]
    fn summaries_average_clients() {
        let rows = vec![
            row(2, 0, "depth_like", Split::G, "rmse", 1.0),
            row(2, 1, "depth_like", Split::G, "rmse", 3.0),
            row(2, 0, "semseg_like", Split::G, "macro_accuracy", 0.5),
            row(0, 0, "depth_like", Split::G, "rmse", 9.0),
        ];
        let s = summarize(&rows, 2);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].mean, s[0].std, s[0].clients), (2.0, 1.0, 2));
        assert!(!s[1].lower_is_better);
    }

    #[test]
    fn improvement_against_self_is_zero_and_mismatch_errors() {
        let rows = vec![
            row(1, 0, "depth_like", Split::G, "rmse", 1.0),
            row(1, 0, "edge_like", Split::G, "weighted_bce_loss", 0.3),
        ];
        let s = summarize(&rows, 1);
        assert_eq!(improvement(&s, &s, Split::G).unwrap().delta_percent, 0.0);
        let fewer = summarize(&rows[..1], 1);
        let err = improvement(&fewer, &s, Split::G).unwrap_err().to_string();
        assert!(err.contains("edge_like"), "{err}");
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![row(
            4,
            2,
            "parts_like@B",
            Split::P,
            "macro_accuracy",
            0.1 + 0.2,
        )];
        write_csv(&path, &rows, &ROUNDS_HEADER).unwrap();
        let back: Vec<RoundRow> = read_csv(&path).unwrap();
        assert_eq!(back, rows);
    }
}
