//! Locating run directories and their Local targets on disk.

use std::path::{Path, PathBuf};

use fmtl_core::fedcore::{read_rounds, RoundRow, REPORT_FILE};
use fmtl_core::{FmtlError, RunReport, RunStatus};

/// A loaded run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub report: RunReport,
    pub rows: Vec<RoundRow>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> fmtl_core::Result<Self> {
        let report = RunReport::load(dir)?;
        let rows = read_rounds(dir)?;
        Ok(LoadedRun { report, rows })
    }

    /// Baseline label shared by every seed of one configuration.
    pub fn label(&self) -> String {
        format!("{}-{}", self.report.strategy, self.report.arch)
    }
}

/// `path` itself when it holds a report, otherwise its immediate
/// subdirectories that do, in name order.
pub fn expand(path: &Path) -> fmtl_core::Result<Vec<PathBuf>> {
    if path.join(REPORT_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(FmtlError::Config(format!(
            "{} contains no run directories",
            path.display()
        )));
    }
    Ok(dirs)
}

pub fn load_all(paths: &[PathBuf]) -> fmtl_core::Result<Vec<LoadedRun>> {
    let mut runs = Vec::new();
    for p in paths {
        for dir in expand(p)? {
            runs.push(LoadedRun::load(&dir)?);
        }
    }
    Ok(runs)
}

/// The completed target run for a scenario (display name) and seed. The
/// target's architecture may differ from the run's.
pub fn find_target<'a>(
    targets: &'a [LoadedRun],
    scenario: &str,
    seed: u64,
) -> fmtl_core::Result<&'a LoadedRun> {
    let matches: Vec<&LoadedRun> = targets
        .iter()
        .filter(|t| {
            t.report.status == RunStatus::Done
                && t.report.seed == seed
                && t.report.scenario == scenario
        })
        .collect();
    match matches.as_slice() {
        [one] => Ok(one),
        [] => Err(FmtlError::Config(format!(
            "no target metrics for {} seed {}",
            scenario, seed
        ))),
        _ => Err(FmtlError::Config(format!(
            "{} target runs match {} seed {}; pass a single baseline",
            matches.len(),
            scenario,
            seed
        ))),
    }
}
