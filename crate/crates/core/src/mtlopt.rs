//! Multi-task gradient combination: loss weighting, PCGrad, CAGrad and
//! server-side pseudo-gradients.

use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};
use crate::numkernel::{RngStream, SegmentedParams};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients from several sources, all of one length.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    entries: Vec<(usize, Vec<f64>)>,
}

impl GradientSet {
    pub fn new(entries: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| FmtlError::Argument("gradient set is empty".into()))?
            .1
            .len();
        for (_, g) in &entries {
            if g.len() != first {
                return Err(FmtlError::shape("gradient set", first, g.len()));
            }
        }
        Ok(GradientSet { entries })
    }

    /// Sources numbered `0..n` in order.
    pub fn from_vecs(grads: Vec<Vec<f64>>) -> Result<Self> {
        GradientSet::new(grads.into_iter().enumerate().collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].1.len()
    }

    pub fn entries(&self) -> &[(usize, Vec<f64>)] {
        &self.entries
    }

    pub fn gradient(&self, i: usize) -> &[f64] {
        &self.entries[i].1
    }

    /// Arithmetic mean, summed in source order.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (_, g) in &self.entries {
            for (o, v) in out.iter_mut().zip(g) {
                *o += v;
            }
        }
        let n = self.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn scaled(&self, alpha: f64) -> GradientSet {
        GradientSet {
            entries: self
                .entries
                .iter()
                .map(|(id, g)| (*id, g.iter().map(|v| v * alpha).collect()))
                .collect(),
        }
    }
}

/// `θ_global − θ_local`: the client's accumulated update as a descent
/// direction for the server.
pub fn pseudo_gradient(global: &SegmentedParams, local: &SegmentedParams) -> Result<Vec<f64>> {
    global.layout().ensure_compatible(local.layout())?;
    Ok(global
        .values()
        .iter()
        .zip(local.values())
        .map(|(g, l)| g - l)
        .collect())
}

/// Output of [`pcgrad_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct PcgradOutput {
    pub combined: Vec<f64>,
    pub surgered: Vec<Vec<f64>>,
    /// For each gradient, the index of the last gradient it was projected
    /// against, if any.
    pub last_offender: Vec<Option<usize>>,
}

/// PCGrad: each gradient is projected off every conflicting other gradient,
/// visited in a seeded random order; returns the mean of the results.
pub fn pcgrad(grads: &GradientSet, rng: &mut RngStream) -> Vec<f64> {
    pcgrad_detailed(grads, rng).combined
}

pub fn pcgrad_detailed(grads: &GradientSet, rng: &mut RngStream) -> PcgradOutput {
    let n = grads.len();
    let norms: Vec<f64> = (0..n)
        .map(|j| dot(grads.gradient(j), grads.gradient(j)))
        .collect();
    let mut surgered = Vec::with_capacity(n);
    let mut last_offender = Vec::with_capacity(n);
    for i in 0..n {
        let mut gi = grads.gradient(i).to_vec();
        let mut order: Vec<usize> = (0..n).filter(|j| *j != i).collect();
        rng.shuffle(&mut order);
        let mut last = None;
        for j in order {
            let gj = grads.gradient(j);
            if norms[j] == 0.0 {
                continue;
            }
            let d = dot(&gi, gj);
            if d < 0.0 {
                let coef = d / norms[j];
                for (a, b) in gi.iter_mut().zip(gj) {
                    *a -= coef * b;
                }
                last = Some(j);
            }
        }
        surgered.push(gi);
        last_offender.push(last);
    }
    let mut combined = vec![0.0; grads.dim()];
    for g in &surgered {
        for (o, v) in combined.iter_mut().zip(g) {
            *o += v;
        }
    }
    combined.iter_mut().for_each(|v| *v /= n as f64);
    PcgradOutput {
        combined,
        surgered,
        last_offender,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CagradConfig {
    pub c: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for CagradConfig {
    fn default() -> Self {
        CagradConfig {
            c: 0.5,
            iterations: 50,
            step: 0.1,
        }
    }
}

impl CagradConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.c) {
            return Err(FmtlError::Config(format!(
                "cagrad c must lie in [0, 1), got {}",
                self.c
            )));
        }
        if !(self.step > 0.0) {
            return Err(FmtlError::Config(
                "cagrad solver step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Solver trace of [`cagrad_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct CagradOutput {
    pub direction: Vec<f64>,
    pub weights: Vec<f64>,
    /// `F(w)` at the start and after every solver iteration.
    pub objective: Vec<f64>,
}

pub fn cagrad(grads: &GradientSet, cfg: &CagradConfig) -> Vec<f64> {
    cagrad_detailed(grads, cfg).direction
}

/// CAGrad. The simplex subproblem is solved in Gram-matrix form, rescaled by
/// the largest squared norm so the fixed step is scale-free. A step that
/// would raise `F` is halved (up to 30 times) and otherwise skipped.
pub fn cagrad_detailed(grads: &GradientSet, cfg: &CagradConfig) -> CagradOutput {
    let n = grads.len();
    let g0 = grads.mean();
    let g0_norm = dot(&g0, &g0).sqrt();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(grads.gradient(i), grads.gradient(j));
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let scale = (0..n).map(|i| gram[i * n + i]).fold(0.0, f64::max);
    let mut weights = vec![1.0 / n as f64; n];
    if scale == 0.0 || cfg.c == 0.0 {
        return CagradOutput {
            direction: g0,
            weights,
            objective: Vec::new(),
        };
    }
    let gram: Vec<f64> = gram.iter().map(|v| v / scale).collect();
    // b_i = g_i·g0 and ||g0|| in the rescaled geometry.
    let b: Vec<f64> = (0..n)
        .map(|i| gram[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let g0n = (b.iter().sum::<f64>() / n as f64).max(0.0).sqrt();
    let quad = |w: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += w[i] * gram[i * n + j] * w[j];
            }
        }
        s.max(0.0)
    };
    let objective_of = |w: &[f64]| dot(w, &b) + cfg.c * g0n * quad(w).sqrt();

    let mut objective = vec![objective_of(&weights)];
    for _ in 0..cfg.iterations {
        let gw_norm = quad(&weights).sqrt();
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                let gi_gw: f64 = (0..n).map(|j| gram[i * n + j] * weights[j]).sum();
                b[i] + if gw_norm > 1e-12 {
                    cfg.c * g0n * gi_gw / gw_norm
                } else {
                    0.0
                }
            })
            .collect();
        let current = *objective.last().expect("seeded above");
        let mut step = cfg.step;
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<f64> = weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let cand = project_simplex(&cand);
            let f = objective_of(&cand);
            if f <= current {
                accepted = Some((cand, f));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((w, f)) => {
                weights = w;
                objective.push(f);
            }
            None => objective.push(current),
        }
    }

    let mut gw = vec![0.0; grads.dim()];
    for (i, (_, g)) in grads.entries().iter().enumerate() {
        for (o, v) in gw.iter_mut().zip(g) {
            *o += weights[i] * v;
        }
    }
    let gw_norm = dot(&gw, &gw).sqrt();
    let direction = if gw_norm < 1e-12 {
        g0
    } else {
        let coef = cfg.c * g0_norm / gw_norm;
        g0.iter().zip(&gw).map(|(a, b)| a + coef * b).collect()
    };
    CagradOutput {
        direction,
        weights,
        objective,
    }
}

/// `Σ q_t ℓ_t / Σ q_t`.
pub fn combine_losses(losses: &[f64], q: &[f64]) -> Result<f64> {
    if losses.len() != q.len() {
        return Err(FmtlError::shape("task weights", losses.len(), q.len()));
    }
    if q.iter().any(|w| !(*w >= 0.0)) {
        return Err(FmtlError::Argument(
            "task weights must be non-negative".into(),
        ));
    }
    let total: f64 = q.iter().sum();
    if !(total > 0.0) {
        return Err(FmtlError::Argument("task weights sum to zero".into()));
    }
    Ok(losses
        .iter()
        .zip(q)
        .filter(|(_, w)| **w > 0.0)
        .map(|(l, w)| l * w)
        .sum::<f64>()
        / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Layout;
    use proptest::prelude::*;

    fn set(v: &[&[f64]]) -> GradientSet {
        GradientSet::from_vecs(v.iter().map(|g| g.to_vec()).collect()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gradient_set_validation() {
        assert!(GradientSet::new(vec![]).is_err());
        assert!(GradientSet::from_vecs(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn pseudo_gradient_basics() {
        let layout = Layout::from_lengths([("a", 1)]).unwrap();
        let g = SegmentedParams::new(layout.clone(), vec![1.0]).unwrap();
        let l = SegmentedParams::new(layout.clone(), vec![0.2]).unwrap();
        assert!(close(&pseudo_gradient(&g, &l).unwrap(), &[0.8], 1e-15));
        assert_eq!(pseudo_gradient(&g, &g).unwrap(), vec![0.0]);
        let other = SegmentedParams::zeros(Layout::from_lengths([("b", 1)]).unwrap());
        assert!(matches!(
            pseudo_gradient(&g, &other),
            Err(FmtlError::LayoutMismatch(_))
        ));
    }

    #[test]
    fn pcgrad_hand_case() {
        let out = pcgrad_detailed(
            &set(&[&[1.0, 0.0], &[-1.0, 1.0]]),
            &mut RngStream::new(0, 0),
        );
        assert!(close(&out.surgered[0], &[0.5, 0.5], 1e-15));
        assert!(close(&out.surgered[1], &[0.0, 1.0], 1e-15));
        assert!(close(&out.combined, &[0.25, 0.75], 1e-15));
    }

    #[test]
    fn pcgrad_trivial_cases() {
        let orth = set(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert_eq!(pcgrad(&orth, &mut RngStream::new(1, 1)), orth.mean());
        let single = set(&[&[3.0, -1.0]]);
        assert_eq!(pcgrad(&single, &mut RngStream::new(1, 1)), vec![3.0, -1.0]);
        let with_zero = set(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(
            pcgrad(&with_zero, &mut RngStream::new(1, 1)),
            vec![0.5, 0.0]
        );
    }

    #[test]
    fn cagrad_c_zero_is_mean() {
        let g = set(&[&[1.0, -2.0], &[-3.0, 0.5], &[0.2, 0.1]]);
        let cfg = CagradConfig {
            c: 0.0,
            ..Default::default()
        };
        assert_eq!(cagrad(&g, &cfg), g.mean());
    }

    #[test]
    fn cagrad_identical_gradients_scale() {
        let g = set(&[&[0.3, -1.2, 2.0], &[0.3, -1.2, 2.0]]);
        let cfg = CagradConfig::default();
        let expected: Vec<f64> = [0.3, -1.2, 2.0].iter().map(|v| v * 1.5).collect();
        assert!(close(&cagrad(&g, &cfg), &expected, 1e-12));
    }

    /// Grid search over the 2-simplex as an independent oracle.
    fn grid_direction(g1: &[f64], g2: &[f64], c: f64) -> Vec<f64> {
        let g0: Vec<f64> = g1.iter().zip(g2).map(|(a, b)| (a + b) / 2.0).collect();
        let g0n = dot(&g0, &g0).sqrt();
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let w = k as f64 / 10_000.0;
            let gw: Vec<f64> = g1
                .iter()
                .zip(g2)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect();
            let f = dot(&gw, &g0) + c * g0n * dot(&gw, &gw).sqrt();
            if f < best.0 {
                best = (f, w);
            }
        }
        let w = best.1;
        let gw: Vec<f64> = g1
            .iter()
            .zip(g2)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        let n = dot(&gw, &gw).sqrt();
        g0.iter()
            .zip(&gw)
            .map(|(a, b)| a + c * g0n / n * b)
            .collect()
    }

    #[test]
    fn cagrad_matches_grid_oracle() {
        let d = cagrad(&set(&[&[1.0, 0.0], &[0.0, 1.0]]), &CagradConfig::default());
        assert!(close(&d, &[0.75, 0.75], 1e-3));
        assert!(close(
            &d,
            &grid_direction(&[1.0, 0.0], &[0.0, 1.0], 0.5),
            1e-3
        ));
        let (a, b) = ([2.0, 0.5], [-1.0, 1.0]);
        // Optimum sits on a vertex; the default 50 iterations stop short of it.
        let cfg = CagradConfig {
            iterations: 2000,
            ..Default::default()
        };
        let d = cagrad(&set(&[&a, &b]), &cfg);
        assert!(close(&d, &grid_direction(&a, &b, 0.5), 1e-3), "{d:?}");
    }

    #[test]
    fn simplex_projection() {
        assert!(close(&project_simplex(&[0.5, 0.5]), &[0.5, 0.5], 1e-15));
        assert!(close(&project_simplex(&[2.0, 0.0]), &[1.0, 0.0], 1e-15));
        assert!(close(
            &project_simplex(&[-1.0, -1.0, -1.0]),
            &[1.0 / 3.0; 3],
            1e-15
        ));
    }

    #[test]
    fn combine_losses_examples() {
        assert_eq!(combine_losses(&[1.0, 3.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert_eq!(combine_losses(&[5.0, 99.0], &[2.0, 0.0]).unwrap(), 5.0);
        assert_eq!(combine_losses(&[4.0, 0.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert!(combine_losses(&[1.0], &[0.0]).is_err());
        assert!(combine_losses(&[1.0], &[1.0, 1.0]).is_err());
    }

    fn grads_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6, 1usize..8).prop_flat_map(|(n, d)| {
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
        })
    }

    proptest! {
        #[test]
        fn pcgrad_removes_last_conflict(grads in grads_strategy(), seed in any::<u64>()) {
            let g = GradientSet::from_vecs(grads).unwrap();
            let out = pcgrad_detailed(&g, &mut RngStream::new(seed, 0));
            for (i, last) in out.last_offender.iter().enumerate() {
                if let Some(j) = last {
                    prop_assert!(dot(&out.surgered[i], g.gradient(*j)) >= -1e-9);
                }
            }
        }

        #[test]
        fn pcgrad_is_mean_without_conflict(grads in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 1..5)) {
            let g = GradientSet::from_vecs(grads).unwrap();
            prop_assert_eq!(pcgrad(&g, &mut RngStream::new(3, 3)), g.mean());
        }

        #[test]
        fn pcgrad_scale_equivariant(grads in grads_strategy(), alpha in 0.01f64..100.0, seed in any::<u64>()) {
            let g = GradientSet::from_vecs(grads).unwrap();
            let base = pcgrad(&g, &mut RngStream::new(seed, 1));
            let scaled = pcgrad(&g.scaled(alpha), &mut RngStream::new(seed, 1));
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a * alpha - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn cagrad_objective_non_increasing(grads in grads_strategy(), c in 0.0f64..0.99) {
            let g = GradientSet::from_vecs(grads).unwrap();
            let out = cagrad_detailed(&g, &CagradConfig { c, ..Default::default() });
            for w in out.objective.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(out.direction.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn cagrad_scale_equivariant(grads in grads_strategy(), alpha in 0.01f64..100.0) {
            let g = GradientSet::from_vecs(grads).unwrap();
            let cfg = CagradConfig::default();
            let base = cagrad(&g, &cfg);
            let scaled = cagrad(&g.scaled(alpha), &cfg);
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a * alpha - b).abs() <= 1e-6 * (1.0 + b.abs()));
            }
        }
    }
}
