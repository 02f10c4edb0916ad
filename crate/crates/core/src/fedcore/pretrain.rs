use std::sync::Arc;

use super::client::{ClientState, LocalObjective, Schedule};
use super::config::ExperimentConfig;
use crate::error::{FmtlError, Result};
use crate::numkernel::{cosine_warmup_lr, AdamWConfig, SegmentedParams};
use crate::synthdata::{pretrain_pool, TaskKind};

/// Trains one model on the domain-A pretrain pool for all domain-A tasks and
/// returns its parameters, for use as a warm-start checkpoint. The learning
/// rate decays over `epochs` by the usual cosine schedule without warmup.
pub fn pretrain(config: &ExperimentConfig, seed: u64, epochs: usize) -> Result<SegmentedParams> {
    if epochs == 0 {
        return Err(FmtlError::Config(
            "pretraining needs at least one epoch".into(),
        ));
    }
    let pool = pretrain_pool(&config.scenario_config(seed));
    let opt = AdamWConfig {
        weight_decay: config.weight_decay,
        ..Default::default()
    };
    let mut client = ClientState::new(config.arch, Arc::new(pool), &TaskKind::DOMAIN_A, seed, opt)?;
    for epoch in 0..epochs {
        let objective = LocalObjective {
            lr: cosine_warmup_lr(epoch, epochs, config.base_lr, 0)?,
            epochs: 1,
            batch_size: config.batch_size,
            regularizer: None,
            schedule: Schedule::Joint,
        };
        client.local_train(&objective)?;
    }
    Ok(client.params)
}
