use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::params::SegmentedParams;
use crate::error::{FmtlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment buffers and step counter for AdamW with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamWState {
    pub fn new(len: usize, config: AdamWConfig) -> Self {
        AdamWState {
            config,
            step_count: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One AdamW update over every coordinate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        let full = 0..params.len();
        self.step_ranges(params, grads, lr, std::slice::from_ref(&full))
    }

    /// One AdamW update restricted to `ranges`; coordinates outside them
    /// (frozen segments) keep their values and moments. The step counter
    /// advances once per call.
    pub fn step_ranges(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        ranges: &[Range<usize>],
    ) -> Result<()> {
        if params.len() != self.len() {
            return Err(FmtlError::shape("adamw params", self.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(FmtlError::shape("adamw grads", params.len(), grads.len()));
        }
        if !(lr >= 0.0) {
            return Err(FmtlError::Argument(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        self.step_count += 1;
        let AdamWConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for range in ranges {
            for i in range.clone() {
                let g = grads[i];
                params[i] -= lr * weight_decay * params[i];
                let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
                let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
                self.first_moment[i] = m;
                self.second_moment[i] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters and advances `state`.
pub fn adamw_step(
    params: &SegmentedParams,
    grads: &[f64],
    state: &mut AdamWState,
    lr: f64,
) -> Result<SegmentedParams> {
    let mut next = params.clone();
    state.step(next.values_mut(), grads, lr)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Layout;

    fn one(v: f64) -> SegmentedParams {
        SegmentedParams::new(Layout::from_lengths([("encoder", 1)]).unwrap(), vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        for lr in [0.0, 1e-4, 0.3] {
            let mut st = AdamWState::new(1, cfg);
            let out = adamw_step(&one(1.0), &[0.0], &mut st, lr).unwrap();
            assert_eq!(out.values(), &[1.0]);
        }
    }

    #[test]
    fn single_step_hand_computation() {
        // decay: 1 - 1e-4*1e-4*1 ; adam: m_hat = 0.5, v_hat = 0.25 -> 1e-4 * 0.5 / (0.5 + 1e-8)
        let mut st = AdamWState::new(1, AdamWConfig::default());
        let out = adamw_step(&one(1.0), &[0.5], &mut st, 1e-4).unwrap();
        let expected = (1.0 - 1e-8) - 1e-4 * 0.5 / (0.5 + 1e-8);
        assert!((out.values()[0] - expected).abs() < 1e-15);
        assert!((out.values()[0] - 0.999_899_99).abs() < 1e-10);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn pure_decoupled_decay() {
        let vals = vec![1.0, -3.5, 0.25, 100.0];
        let layout = Layout::from_lengths([("encoder", 4)]).unwrap();
        let p = SegmentedParams::new(layout, vals.clone()).unwrap();
        let mut st = AdamWState::new(4, AdamWConfig::default());
        let out = adamw_step(&p, &[0.0; 4], &mut st, 1e-4).unwrap();
        for (o, v) in out.values().iter().zip(&vals) {
            assert_eq!(*o, v - 1e-8 * v);
        }
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let mut st = AdamWState::new(1, AdamWConfig::default());
        assert!(matches!(
            adamw_step(&one(1.0), &[0.0, 1.0], &mut st, 1e-4),
            Err(FmtlError::Shape { .. })
        ));
    }

    #[test]
    fn masked_step_leaves_frozen_coordinates() {
        let mut st = AdamWState::new(3, AdamWConfig::default());
        let mut p = vec![1.0, 1.0, 1.0];
        st.step_ranges(&mut p, &[1.0, 1.0, 1.0], 0.1, &[Range { start: 1, end: 2 }])
            .unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[2], 1.0);
        assert!(p[1] < 1.0);
        assert_eq!(st.first_moment()[0], 0.0);
    }

    #[test]
    fn deterministic_bits() {
        let g = [0.3, -0.7];
        let layout = Layout::from_lengths([("encoder", 2)]).unwrap();
        let p = SegmentedParams::new(layout, vec![0.11, 0.22]).unwrap();
        let mut a = AdamWState::new(2, AdamWConfig::default());
        let mut b = a.clone();
        let x = adamw_step(&p, &g, &mut a, 1e-3).unwrap();
        let y = adamw_step(&p, &g, &mut b, 1e-3).unwrap();
        assert_eq!(x.values()[0].to_bits(), y.values()[0].to_bits());
        assert_eq!(x.values()[1].to_bits(), y.values()[1].to_bits());
    }
}
