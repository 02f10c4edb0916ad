use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::strategy::{Strategy, StrategyId, StrategyParams};
use crate::error::{FmtlError, Result};
use crate::models::ArchKind;
use crate::synthdata::{PoolSizes, ScenarioConfig, ScenarioId};

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "FMTL_";

/// Everything needed to reproduce a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    pub arch: ArchKind,
    pub strategy: Strategy,
    /// Share only the encoder ("-E" variants).
    pub decoupled: bool,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    /// Defaults to 4, or 1 when the scenario includes the second domain.
    pub local_epochs: Option<usize>,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    pub eval_interval: usize,
    pub hyper: StrategyParams,
    /// Client count override for the evenly split scenarios.
    pub client_count: Option<usize>,
    pub unbalance_ratio: f64,
    pub pool_a: PoolSizes,
    pub pool_b: PoolSizes,
    pub pretrain_count: usize,
    /// Checkpoint whose matching segments seed every client.
    pub warm_start: Option<PathBuf>,
    /// Train clients on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data = ScenarioConfig::default();
        ExperimentConfig {
            scenario: ScenarioId::Iid1,
            arch: ArchKind::Md,
            strategy: Strategy::FedAvg,
            decoupled: false,
            seeds: vec![0],
            rounds: 100,
            local_epochs: None,
            batch_size: 8,
            base_lr: 1e-4,
            weight_decay: 1e-4,
            warmup: 5,
            eval_interval: 2,
            hyper: StrategyParams::default(),
            client_count: None,
            unbalance_ratio: data.unbalance_ratio,
            pool_a: data.pool_a,
            pool_b: data.pool_b,
            pretrain_count: data.pretrain_count,
            warm_start: None,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn strategy_id(&self) -> StrategyId {
        StrategyId::new(self.strategy, self.decoupled)
    }

    pub fn epochs(&self) -> usize {
        self.local_epochs
            .unwrap_or(if self.scenario.has_domain_b() { 1 } else { 4 })
    }

    pub fn scenario_config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            scenario_id: self.scenario,
            seed,
            pool_a: self.pool_a,
            pool_b: self.pool_b,
            unbalance_ratio: self.unbalance_ratio,
            client_count: self.client_count,
            pretrain_count: self.pretrain_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(FmtlError::Config(m));
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.rounds == 0 {
            return fail("rounds must be positive".into());
        }
        if self.warmup >= self.rounds {
            return fail(format!(
                "warmup ({}) must be below rounds ({})",
                self.warmup, self.rounds
            ));
        }
        if self.local_epochs == Some(0) || self.batch_size == 0 || self.eval_interval == 0 {
            return fail("local_epochs, batch_size and eval_interval must be positive".into());
        }
        if !(self.base_lr > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("base_lr must be positive and weight_decay non-negative".into());
        }
        self.hyper.validate()?;
        self.scenario_config(self.seeds[0]).spec()?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| FmtlError::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    /// Loads a JSON config, applies `FMTL_<KEY>` overrides from `env` and
    /// validates the result.
    pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| FmtlError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_value_with_overrides(value, env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value_with_overrides(
        mut value: Value,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        apply_overrides(&mut value, env)?;
        serde_json::from_value(value).map_err(|e| FmtlError::Config(format!("invalid config: {e}")))
    }

    /// Canonical JSON: object keys sorted, no whitespace.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        serde_json::to_string(&value).expect("value serialises")
    }

    /// Stable id of the single-seed run `(self, seed)`.
    pub fn run_id(&self, seed: u64) -> String {
        let single = ExperimentConfig {
            seeds: vec![seed],
            parallel: true,
            ..self.clone()
        };
        let digest = Sha256::digest(single.canonical_json().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let label = format!(
            "{}-{}-{}",
            self.scenario.slug(),
            self.arch,
            self.strategy_id()
        )
        .to_ascii_lowercase();
        format!("{label}-s{seed}-{}", &hex[..12])
    }
}

/// Applies flat `FMTL_<KEY>=<value>` overrides. Keys match top-level config
/// fields first, then fields of `hyper`. Values are parsed as JSON and fall
/// back to plain strings.
pub fn apply_overrides(
    value: &mut Value,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    let defaults = serde_json::to_value(ExperimentConfig::default()).expect("config serialises");
    let top_keys: Vec<String> = defaults
        .as_object()
        .expect("object")
        .keys()
        .cloned()
        .collect();
    let hyper_keys: Vec<String> = defaults["hyper"]
        .as_object()
        .expect("object")
        .keys()
        .cloned()
        .collect();
    let obj = value
        .as_object_mut()
        .ok_or_else(|| FmtlError::Config("config must be a JSON object".into()))?;
    for (name, raw) in env {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = key.to_ascii_lowercase();
        let parsed = serde_json::from_str::<Value>(&raw).unwrap_or(Value::String(raw.clone()));
        if top_keys.contains(&key) {
            obj.insert(key, parsed);
        } else if hyper_keys.contains(&key) {
            let hyper = obj
                .entry("hyper")
                .or_insert_with(|| Value::Object(Default::default()));
            hyper
                .as_object_mut()
                .ok_or_else(|| FmtlError::Config("`hyper` must be an object".into()))?
                .insert(key, parsed);
        } else {
            return Err(FmtlError::Config(format!(
                "{name} does not name a config key"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_epochs() {
        let cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.epochs(), 4);
        let b = ExperimentConfig {
            scenario: ScenarioId::Niid6,
            ..cfg
        };
        assert_eq!(b.epochs(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"rounds": 3, "bogus": 1}"#).is_err());
        let cfg =
            ExperimentConfig::from_json_str(r#"{"rounds": 3, "strategy": "fedamp", "arch": "TC"}"#)
                .unwrap();
        assert_eq!(
            (cfg.rounds, cfg.strategy, cfg.arch),
            (3, Strategy::FedAmp, ArchKind::Tc)
        );
    }

    #[test]
    fn env_overrides() {
        let value = serde_json::json!({"rounds": 10});
        let env = vec![
            ("FMTL_ROUNDS".to_string(), "20".to_string()),
            ("FMTL_STRATEGY".to_string(), "pcgrad".to_string()),
            ("FMTL_PROX_MU".to_string(), "0.5".to_string()),
            ("HOME".to_string(), "/x".to_string()),
        ];
        let cfg = ExperimentConfig::from_value_with_overrides(value.clone(), env).unwrap();
        assert_eq!(cfg.rounds, 20);
        assert_eq!(cfg.strategy, Strategy::PcGrad);
        assert_eq!(cfg.hyper.prox_mu, 0.5);
        let bad = vec![("FMTL_NOPE".to_string(), "1".to_string())];
        assert!(ExperimentConfig::from_value_with_overrides(value, bad).is_err());
    }

    #[test]
    fn run_ids_are_stable_and_distinct() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seeds: vec![0, 1, 2],
            ..a.clone()
        };
        assert_eq!(a.run_id(0), b.run_id(0));
        assert_ne!(a.run_id(0), a.run_id(1));
        let c = ExperimentConfig {
            parallel: false,
            ..a.clone()
        };
        assert_eq!(a.run_id(0), c.run_id(0));
        let d = ExperimentConfig {
            rounds: 99,
            ..a.clone()
        };
        assert_ne!(a.run_id(0), d.run_id(0));
        assert!(a.run_id(0).starts_with("iid1-md-fedavg-s0-"));
    }

    #[test]
    fn invalid_configs() {
        let bad = ExperimentConfig {
            warmup: 100,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            client_count: Some(4),
            scenario: ScenarioId::Niid6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
