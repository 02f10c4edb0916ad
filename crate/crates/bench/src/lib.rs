//! Deterministic fixtures shared by the kernel benchmarks.

use fmtl_core::models::{init_params, ArchKind};
use fmtl_core::numkernel::{RngStream, SegmentedParams};
use fmtl_core::synthdata::{build_world, Domain, Sample, TaskKind};

/// Parameters, a sample pool and uniform task weights for one architecture
/// over the domain A tasks.
pub struct ModelFixture {
    pub arch: ArchKind,
    pub params: SegmentedParams,
    pub pool: Vec<Sample>,
    pub weights: Vec<(TaskKind, f64)>,
}

impl ModelFixture {
    pub fn new(arch: ArchKind, batch: usize) -> Self {
        let tasks = TaskKind::DOMAIN_A.to_vec();
        let mut rng = RngStream::new(11, 0);
        let params = init_params(arch, &tasks, &mut rng).expect("domain A layout");
        let pool = build_world(11, Domain::A).draw_pool("bench", batch);
        let weights = tasks
            .iter()
            .map(|t| (*t, 1.0 / tasks.len() as f64))
            .collect();
        ModelFixture {
            arch,
            params,
            pool,
            weights,
        }
    }

    pub fn batch(&self) -> Vec<&Sample> {
        self.pool.iter().collect()
    }
}

/// `count` Gaussian vectors of length `dim`.
pub fn gaussian_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed, 1);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.standard_normal()).collect())
        .collect()
}

/// Paired samples with a small location shift, for the rank tests.
pub fn paired_samples(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngStream::new(seed, 2);
    let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let y = x
        .iter()
        .map(|v| v + 0.3 + 0.5 * rng.standard_normal())
        .collect();
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        for arch in [ArchKind::Md, ArchKind::Tc] {
            let f = ModelFixture::new(arch, 8);
            let out =
                fmtl_core::models::forward_backward(f.arch, &f.params, &f.batch(), &f.weights)
                    .unwrap();
            assert_eq!(out.grad.len(), f.params.values().len());
        }
        assert_eq!(gaussian_vectors(3, 5, 0), gaussian_vectors(3, 5, 0));
        assert_eq!(paired_samples(10, 1).1.len(), 10);
    }
}
