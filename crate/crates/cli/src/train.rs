use std::path::Path;

use fmtl_core::fedcore::{pretrain, run_experiment};
use fmtl_core::numkernel::save_checkpoint;
use fmtl_core::RunStatus;

use crate::options::ConfigArgs;
use crate::rundirs::{find_target, load_all};

fn fmt_delta(d: Option<f64>) -> String {
    d.map_or_else(|| "-".to_string(), |v| format!("{v:+.2}"))
}

pub fn cmd_run(args: &ConfigArgs, out: &Path, target: Option<&Path>) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let targets = match target {
        Some(t) => load_all(&[t.to_path_buf()])?,
        None => Vec::new(),
    };
    for &seed in &cfg.seeds {
        // Looked up before running so a missing target fails fast.
        let target_report = match target {
            Some(_) => Some(&find_target(&targets, cfg.scenario.name(), seed)?.report),
            None => None,
        };
        let outcome = run_experiment(&cfg, seed, out, target_report)?;
        let r = &outcome.report;
        match r.status {
            RunStatus::Done => println!(
                "{}  done  dG {}  dP {}  bytes {}  {}",
                r.run_id,
                fmt_delta(r.delta_g_percent),
                fmt_delta(r.delta_p_percent),
                r.bytes_total,
                outcome.run_dir.display()
            ),
            RunStatus::NullBaseline => println!(
                "{}  null_baseline  {}  {}",
                r.run_id,
                r.null_reason.as_deref().unwrap_or(""),
                outcome.run_dir.display()
            ),
        }
    }
    Ok(())
}

pub fn cmd_pretrain(args: &ConfigArgs, epochs: usize, out: &Path) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let seed = cfg.seeds[0];
    let params = pretrain(&cfg, seed, epochs)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(out, &params)?;
    println!(
        "{} checkpoint, {} parameters, {epochs} epochs, seed {seed} -> {}",
        cfg.arch,
        params.len(),
        out.display()
    );
    Ok(())
}
