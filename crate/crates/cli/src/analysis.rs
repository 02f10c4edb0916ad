//! `report` and `compare`: improvements over the Local target and the rank
//! statistics across baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fmtl_core::evalstat::{
    bonferroni, delta_percent, friedman_nemenyi, mean_std, wilcoxon_signed_rank,
};
use fmtl_core::fedcore::{improvement, summarize, write_csv, RoundRow};
use fmtl_core::{CdReport, FmtlError, RunStatus, Split};
use serde::Serialize;

use crate::rundirs::{find_target, load_all, LoadedRun};

/// What one paired observation is in `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Per-task improvement of one seed.
    SeedTask,
    /// Overall improvement of one seed.
    Seed,
}

/// Δ% of `rows` at `round` over the target's rows at `target_round`.
fn delta_at(
    rows: &[RoundRow],
    round: usize,
    target: &[RoundRow],
    target_round: usize,
    split: Split,
) -> fmtl_core::Result<fmtl_core::evalstat::ImprovementReport> {
    improvement(
        &summarize(rows, round),
        &summarize(target, target_round),
        split,
    )
}

#[derive(Debug, Serialize)]
struct ReportRow {
    scenario: String,
    arch: String,
    strategy: String,
    status: String,
    seeds: usize,
    delta_g_mean: Option<f64>,
    delta_g_std: Option<f64>,
    delta_p_mean: Option<f64>,
    delta_p_std: Option<f64>,
}

const REPORT_HEADER: [&str; 9] = [
    "scenario",
    "arch",
    "strategy",
    "status",
    "seeds",
    "delta_g_mean",
    "delta_g_std",
    "delta_p_mean",
    "delta_p_std",
];

fn group(runs: Vec<LoadedRun>) -> BTreeMap<(String, String), Vec<LoadedRun>> {
    let mut groups: BTreeMap<(String, String), Vec<LoadedRun>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.report.scenario.clone(), r.label()))
            .or_default()
            .push(r);
    }
    groups
}

pub fn cmd_report(runs: &[PathBuf], target: &Path, csv: Option<&Path>) -> anyhow::Result<()> {
    let targets = load_all(&[target.to_path_buf()])?;
    let mut table = Vec::new();
    for ((scenario, _), members) in group(load_all(runs)?) {
        let first = &members[0].report;
        let mut row = ReportRow {
            scenario,
            arch: first.arch.clone(),
            strategy: first.strategy.clone(),
            status: "null_baseline".into(),
            seeds: members.len(),
            delta_g_mean: None,
            delta_g_std: None,
            delta_p_mean: None,
            delta_p_std: None,
        };
        if members.iter().all(|m| m.report.status == RunStatus::Done) {
            let (mut g, mut p) = (Vec::new(), Vec::new());
            for m in &members {
                let t = find_target(&targets, &m.report.scenario, m.report.seed)?;
                let (round, t_round) = (m.report.final_round, t.report.final_round);
                g.push(delta_at(&m.rows, round, &t.rows, t_round, Split::G)?.delta_percent);
                p.push(delta_at(&m.rows, round, &t.rows, t_round, Split::P)?.delta_percent);
            }
            let ((gm, gs), (pm, ps)) = (mean_std(&g), mean_std(&p));
            row.status = "done".into();
            (row.delta_g_mean, row.delta_g_std) = (Some(gm), Some(gs));
            (row.delta_p_mean, row.delta_p_std) = (Some(pm), Some(ps));
        } else if members.iter().any(|m| m.report.status == RunStatus::Done) {
            return Err(FmtlError::Config(format!(
                "{} {}-{} mixes completed and null runs",
                row.scenario, row.strategy, row.arch
            ))
            .into());
        }
        table.push(row);
    }
    println!(
        "{:<10} {:<4} {:<12} {:>5}  {:>16}  {:>16}",
        "scenario", "arch", "strategy", "seeds", "dG% (mean±std)", "dP% (mean±std)"
    );
    for r in &table {
        let cell = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{m:+.2}±{s:.2}"),
            _ => "NULL".to_string(),
        };
        println!(
            "{:<10} {:<4} {:<12} {:>5}  {:>16}  {:>16}",
            r.scenario,
            r.arch,
            r.strategy,
            r.seeds,
            cell(r.delta_g_mean, r.delta_g_std),
            cell(r.delta_p_mean, r.delta_p_std)
        );
    }
    if let Some(path) = csv {
        write_csv(path, &table, &REPORT_HEADER)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PValueRow {
    baseline_a: String,
    baseline_b: String,
    n: usize,
    w_plus: Option<f64>,
    w_minus: Option<f64>,
    raw_p: Option<f64>,
    adjusted_p: Option<f64>,
    exact: Option<bool>,
    note: String,
}

const PVALUE_HEADER: [&str; 9] = [
    "baseline_a",
    "baseline_b",
    "n",
    "w_plus",
    "w_minus",
    "raw_p",
    "adjusted_p",
    "exact",
    "note",
];

#[derive(Debug, Serialize)]
struct CdFile {
    pairing: Pairing,
    split: Split,
    /// One block per entry, as "seed/task".
    blocks: Vec<String>,
    #[serde(flatten)]
    report: CdReport,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    round: usize,
    baseline: String,
    seeds: usize,
    delta_g: f64,
    delta_p: f64,
}

const CURVE_HEADER: [&str; 5] = ["round", "baseline", "seeds", "delta_g", "delta_p"];

type Observations = BTreeMap<(u64, String), f64>;

fn observations(
    members: &[LoadedRun],
    targets: &[LoadedRun],
    split: Split,
    pairing: Pairing,
) -> fmtl_core::Result<Observations> {
    let mut obs = Observations::new();
    for m in members {
        let t = find_target(targets, &m.report.scenario, m.report.seed)?;
        let imp = delta_at(
            &m.rows,
            m.report.final_round,
            &t.rows,
            t.report.final_round,
            split,
        )?;
        match pairing {
            Pairing::Seed => {
                obs.insert((m.report.seed, "all".into()), imp.delta_percent);
            }
            Pairing::SeedTask => {
                for e in &imp.entries {
                    obs.insert(
                        (m.report.seed, e.task.clone()),
                        delta_percent(std::slice::from_ref(e))?,
                    );
                }
            }
        }
    }
    Ok(obs)
}

fn curves(
    members: &[LoadedRun],
    targets: &[LoadedRun],
    label: &str,
) -> fmtl_core::Result<Vec<CurveRow>> {
    let rounds: BTreeSet<usize> = members[0].rows.iter().map(|r| r.round).collect();
    let mut out = Vec::new();
    for round in rounds {
        let (mut g, mut p) = (Vec::new(), Vec::new());
        for m in members {
            let t = find_target(targets, &m.report.scenario, m.report.seed)?;
            let present = |rows: &[RoundRow]| rows.iter().any(|r| r.round == round);
            if !present(&m.rows) || !present(&t.rows) {
                continue;
            }
            g.push(delta_at(&m.rows, round, &t.rows, round, Split::G)?.delta_percent);
            p.push(delta_at(&m.rows, round, &t.rows, round, Split::P)?.delta_percent);
        }
        if g.len() == members.len() {
            out.push(CurveRow {
                round,
                baseline: label.to_string(),
                seeds: g.len(),
                delta_g: mean_std(&g).0,
                delta_p: mean_std(&p).0,
            });
        }
    }
    Ok(out)
}

pub fn cmd_compare(
    runs: &[PathBuf],
    target: &Path,
    out: &Path,
    split: Split,
    alpha: f64,
    pairing: Pairing,
) -> anyhow::Result<()> {
    let targets = load_all(&[target.to_path_buf()])?;
    let done: Vec<LoadedRun> = load_all(runs)?
        .into_iter()
        .filter(|r| r.report.status == RunStatus::Done)
        .collect();
    let mut by_label: BTreeMap<String, Vec<LoadedRun>> = BTreeMap::new();
    for r in done {
        let label = format!("{}:{}", r.report.scenario, r.label());
        by_label.entry(label).or_default().push(r);
    }
    if by_label.len() < 2 {
        return Err(FmtlError::Config(format!(
            "compare needs at least two completed baselines, found {}",
            by_label.len()
        ))
        .into());
    }
    let labels: Vec<String> = by_label.keys().cloned().collect();
    let mut obs = Vec::new();
    for members in by_label.values() {
        obs.push(observations(members, &targets, split, pairing)?);
    }

    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let common: Vec<&(u64, String)> =
                obs[i].keys().filter(|k| obs[j].contains_key(*k)).collect();
            let x: Vec<f64> = common.iter().map(|k| obs[i][*k]).collect();
            let y: Vec<f64> = common.iter().map(|k| obs[j][*k]).collect();
            let mut row = PValueRow {
                baseline_a: labels[i].clone(),
                baseline_b: labels[j].clone(),
                n: common.len(),
                w_plus: None,
                w_minus: None,
                raw_p: None,
                adjusted_p: None,
                exact: None,
                note: String::new(),
            };
            match wilcoxon_signed_rank(&x, &y) {
                Ok(w) => {
                    (row.w_plus, row.w_minus) = (Some(w.w_plus), Some(w.w_minus));
                    row.raw_p = Some(w.p_value);
                    row.exact = Some(w.exact);
                    if w.degenerate {
                        row.note = "all differences zero".into();
                    }
                    raw.push((rows.len(), w.p_value));
                }
                Err(e) => row.note = e.to_string(),
            }
            rows.push(row);
        }
    }
    let adjusted = bonferroni(&raw.iter().map(|(_, p)| *p).collect::<Vec<_>>(), raw.len());
    for ((idx, _), adj) in raw.iter().zip(adjusted) {
        rows[*idx].adjusted_p = Some(adj);
    }

    let blocks: Vec<&(u64, String)> = obs[0]
        .keys()
        .filter(|k| obs.iter().all(|o| o.contains_key(*k)))
        .collect();
    let scores: Vec<Vec<f64>> = blocks
        .iter()
        .map(|k| obs.iter().map(|o| o[*k]).collect())
        .collect();
    let report = friedman_nemenyi(&labels, &scores, &vec![false; blocks.len()], alpha)?;
    let cd = CdFile {
        pairing,
        split,
        blocks: blocks.iter().map(|(s, t)| format!("{s}/{t}")).collect(),
        report,
    };

    let mut curve_rows = Vec::new();
    for (label, members) in &by_label {
        curve_rows.extend(curves(members, &targets, label)?);
    }

    std::fs::create_dir_all(out)?;
    write_csv(&out.join("pvalues.csv"), &rows, &PVALUE_HEADER)?;
    let mut text = serde_json::to_string_pretty(&cd)?;
    text.push('\n');
    std::fs::write(out.join("cd.json"), text)?;
    write_csv(&out.join("curves.csv"), &curve_rows, &CURVE_HEADER)?;

    println!(
        "{} baselines over {} blocks, CD = {:.3}",
        labels.len(),
        blocks.len(),
        cd.report.critical_difference
    );
    for (l, r) in labels.iter().zip(&cd.report.average_ranks) {
        println!("  {r:>6.3}  {l}");
    }
    println!(
        "wrote pvalues.csv, cd.json, curves.csv to {}",
        out.display()
    );
    Ok(())
}
