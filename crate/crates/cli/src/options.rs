use std::path::PathBuf;

use clap::Args;
use fmtl_core::{ArchKind, ExperimentConfig, FmtlError, ScenarioId, StrategyId};
use serde_json::Value;

/// Config file plus flag overrides. Precedence, lowest first: defaults,
/// file, `FMTL_<KEY>` environment variables, flags.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
    #[arg(long)]
    pub arch: Option<ArchKind>,
    /// Strategy name; a `-E` suffix shares only the encoder.
    #[arg(long)]
    pub strategy: Option<StrategyId>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Warmup rounds; must stay below `rounds`.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub local_epochs: Option<usize>,
    #[arg(long)]
    pub client_count: Option<usize>,
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Train clients one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> fmtl_core::Result<ExperimentConfig> {
        let value = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| FmtlError::Config(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        let env = std::env::vars().filter(|(k, _)| k.starts_with(fmtl_core::fedcore::ENV_PREFIX));
        let mut cfg = ExperimentConfig::from_value_with_overrides(value, env)?;
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(a) = self.arch {
            cfg.arch = a;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s.strategy;
            cfg.decoupled = s.decoupled;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(w) = self.warmup {
            cfg.warmup = w;
        }
        if self.local_epochs.is_some() {
            cfg.local_epochs = self.local_epochs;
        }
        if self.client_count.is_some() {
            cfg.client_count = self.client_count;
        }
        if self.warm_start.is_some() {
            cfg.warm_start = self.warm_start.clone();
        }
        if self.sequential {
            cfg.parallel = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
