use std::path::Path;

use anyhow::Context;
use fmtl_core::synthdata::{make_scenario, write_scenario};
use fmtl_core::FmtlError;

use crate::options::ConfigArgs;

pub fn cmd_generate(args: &ConfigArgs, out: &Path, force: bool) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    for &seed in &cfg.seeds {
        let dir = out.join(cfg.scenario.slug()).join(seed.to_string());
        if dir.exists() {
            if !force {
                return Err(FmtlError::Config(format!(
                    "{} already exists; pass --force to replace it",
                    dir.display()
                ))
                .into());
            }
            std::fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
        }
        let scenario = make_scenario(&cfg.scenario_config(seed).spec()?)?;
        let manifest = write_scenario(&dir, &scenario)?;
        println!(
            "{} seed {seed}: {} clients, {} test pools, manifest {} -> {}",
            cfg.scenario,
            manifest.clients.len(),
            manifest.global_test.len(),
            &manifest.manifest_hash[..16],
            dir.display()
        );
    }
    Ok(())
}
