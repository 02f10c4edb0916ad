use std::f64::consts::PI;

use crate::error::{FmtlError, Result};

/// Linear warmup followed by cosine decay, indexed by zero-based round.
///
/// Warmup rounds ramp as `base_lr * (round + 1) / warmup_rounds`; afterwards
/// the rate follows half a cosine period from `base_lr` down towards zero.
pub fn cosine_warmup_lr(
    round: usize,
    total_rounds: usize,
    base_lr: f64,
    warmup_rounds: usize,
) -> Result<f64> {
    if round >= total_rounds {
        return Err(FmtlError::Argument(format!(
            "round {round} outside 0..{total_rounds}"
        )));
    }
    if warmup_rounds >= total_rounds {
        return Err(FmtlError::Argument(format!(
            "warmup {warmup_rounds} must be shorter than {total_rounds} rounds"
        )));
    }
    if round < warmup_rounds {
        return Ok(base_lr * (round + 1) as f64 / warmup_rounds as f64);
    }
    let progress = (round - warmup_rounds) as f64 / (total_rounds - warmup_rounds) as f64;
    Ok(base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}
