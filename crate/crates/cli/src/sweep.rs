//! Scale and warm-start studies: expand a template over one axis, run every
//! cell and record its outcome in `suite.json`.

use std::path::Path;

use clap::ValueEnum;
use fmtl_core::fedcore::{pretrain, run_experiment, write_csv};
use fmtl_core::numkernel::save_checkpoint;
use fmtl_core::{ExperimentConfig, RunStatus, StrategyId};
use serde::{Deserialize, Serialize};

use crate::options::ConfigArgs;

pub const MANIFEST_FILE: &str = "suite.json";
pub const SUMMARY_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Client count 2 through 8.
    Clients,
    /// Every strategy from scratch and from a pretrained checkpoint.
    Pretrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    Done,
    Failed,
    NullBaseline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub cell: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub run_id: String,
    pub status: SuiteStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub axis: Axis,
    pub entries: Vec<SuiteEntry>,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    cell: &'a str,
    seed: u64,
    run_id: &'a str,
    status: SuiteStatus,
    bytes_total: Option<u64>,
    task: Option<&'a str>,
    split: Option<fmtl_core::Split>,
    metric_name: Option<&'a str>,
    mean: Option<f64>,
    std: Option<f64>,
}

const SUMMARY_HEADER: [&str; 10] = [
    "cell",
    "seed",
    "run_id",
    "status",
    "bytes_total",
    "task",
    "split",
    "metric_name",
    "mean",
    "std",
];

fn cells(
    template: &ExperimentConfig,
    axis: Axis,
    strategies: &[StrategyId],
    checkpoint: &Path,
) -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for s in strategies {
        let base = ExperimentConfig {
            strategy: s.strategy,
            decoupled: s.decoupled,
            ..template.clone()
        };
        match axis {
            Axis::Clients => {
                for k in 2..=8 {
                    let cfg = ExperimentConfig {
                        client_count: Some(k),
                        warm_start: None,
                        ..base.clone()
                    };
                    out.push((format!("{s}/clients={k}"), cfg));
                }
            }
            Axis::Pretrain => {
                let scratch = ExperimentConfig {
                    warm_start: None,
                    ..base.clone()
                };
                let warm = ExperimentConfig {
                    warm_start: Some(checkpoint.to_path_buf()),
                    ..base
                };
                out.push((format!("{s}/scratch"), scratch));
                out.push((format!("{s}/pretrained"), warm));
            }
        }
    }
    out
}

pub fn cmd_sweep(
    args: &ConfigArgs,
    axis: Axis,
    out: &Path,
    strategies: &[String],
    pretrain_epochs: usize,
) -> anyhow::Result<()> {
    let template = args.resolve()?;
    let strategies: Vec<StrategyId> = if strategies.is_empty() {
        vec![template.strategy_id()]
    } else {
        strategies
            .iter()
            .map(|s| s.parse())
            .collect::<fmtl_core::Result<_>>()?
    };
    std::fs::create_dir_all(out)?;
    let runs_dir = out.join("runs");
    let mut entries = Vec::new();
    for &seed in &template.seeds {
        let checkpoint = out.join(format!("pretrain-{}-s{seed}.fmtlckpt", template.arch));
        if axis == Axis::Pretrain && !checkpoint.exists() {
            let params = pretrain(&template, seed, pretrain_epochs)?;
            save_checkpoint(&checkpoint, &params)?;
        }
        for (cell, cfg) in cells(&template, axis, &strategies, &checkpoint) {
            let cfg = ExperimentConfig {
                seeds: vec![seed],
                ..cfg
            };
            let run_id = cfg.run_id(seed);
            let (status, error) = match cfg
                .validate()
                .and_then(|_| run_experiment(&cfg, seed, &runs_dir, None))
            {
                Ok(o) if o.report.status == RunStatus::NullBaseline => {
                    (SuiteStatus::NullBaseline, o.report.null_reason)
                }
                Ok(_) => (SuiteStatus::Done, None),
                Err(e) => (SuiteStatus::Failed, Some(e.to_string())),
            };
            println!("{cell} seed {seed}: {status:?} {run_id}");
            entries.push(SuiteEntry {
                cell,
                seed,
                config: cfg,
                run_id,
                status,
                error,
            });
        }
    }
    let manifest = SuiteManifest { axis, entries };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join(MANIFEST_FILE), text)?;

    let reports: Vec<Option<fmtl_core::RunReport>> = manifest
        .entries
        .iter()
        .map(|e| match e.status {
            SuiteStatus::Done => fmtl_core::RunReport::load(&runs_dir.join(&e.run_id)).ok(),
            _ => None,
        })
        .collect();
    let mut rows = Vec::new();
    for (e, report) in manifest.entries.iter().zip(&reports) {
        let blank = SummaryRow {
            cell: &e.cell,
            seed: e.seed,
            run_id: &e.run_id,
            status: e.status,
            bytes_total: None,
            task: None,
            split: None,
            metric_name: None,
            mean: None,
            std: None,
        };
        match report {
            Some(r) => rows.extend(r.metrics.iter().map(|m| SummaryRow {
                bytes_total: Some(r.bytes_total),
                task: Some(&m.task),
                split: Some(m.split),
                metric_name: Some(&m.metric_name),
                mean: Some(m.mean),
                std: Some(m.std),
                ..blank
            })),
            None => rows.push(blank),
        }
    }
    write_csv(&out.join(SUMMARY_FILE), &rows, &SUMMARY_HEADER)?;
    let failed = manifest
        .entries
        .iter()
        .filter(|e| e.status == SuiteStatus::Failed)
        .count();
    println!(
        "{} cells, {failed} failed; wrote {} and {}",
        manifest.entries.len(),
        MANIFEST_FILE,
        SUMMARY_FILE
    );
    Ok(())
}
