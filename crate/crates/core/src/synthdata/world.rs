use super::task::{Domain, TaskKind};
use crate::numkernel::RngStream;

pub const INPUT_DIM: usize = 16;
pub const FEATURE_DIM: usize = 32;

/// Input-mean shift applied to every coordinate of domain-B inputs.
pub const DOMAIN_B_SHIFT: f64 = 1.5;

const CALIBRATION_SAMPLES: usize = 4000;
const EDGE_POSITIVE_RATE: f64 = 0.2;
const REGRESSION_NOISE: f64 = 0.1;
const LABEL_FLIP: f64 = 0.02;

/// Ground-truth labels for every task family. Clients only ever see the
/// labels of the tasks they hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub depth: f64,
    pub edge: bool,
    pub normal: [f64; 3],
    pub semseg: usize,
    pub parts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Scalar(f64),
    Binary(bool),
    Unit(&'a [f64; 3]),
    Class(usize),
}

impl Labels {
    pub fn target(&self, task: TaskKind) -> Target<'_> {
        match task {
            TaskKind::Depth => Target::Scalar(self.depth),
            TaskKind::Edge => Target::Binary(self.edge),
            TaskKind::Normals => Target::Unit(&self.normal),
            TaskKind::SemSeg => Target::Class(self.semseg),
            TaskKind::Parts => Target::Class(self.parts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: [f64; INPUT_DIM],
    pub labels: Labels,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    /// Row-major `out × FEATURE_DIM`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Head {
    fn random(out: usize, scale: f64, rng: &mut RngStream) -> Self {
        let std = scale / (FEATURE_DIM as f64).sqrt();
        Head {
            weights: (0..out * FEATURE_DIM)
                .map(|_| rng.standard_normal() * std)
                .collect(),
            bias: vec![0.0; out],
        }
    }

    fn apply(&self, h: &[f64; FEATURE_DIM]) -> Vec<f64> {
        self.bias
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &self.weights[o * FEATURE_DIM..(o + 1) * FEATURE_DIM];
                b + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.bias.iter_mut().for_each(|b| *b *= factor);
    }
}

/// A fixed random generative process for one domain: inputs pass through a
/// two-layer tanh map to a 32-dim feature `h(x)`, and every task label is a
/// calibrated random head of `h(x)` plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub domain: Domain,
    pub seed: u64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    heads: Vec<Head>,
    depth_noise: f64,
    normal_noise: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn build_world(seed: u64, domain: Domain) -> WorldModel {
    let mut rng = RngStream::derive(seed, 0x5eed_0000 + domain.code(), "world");
    let w1_std = 1.5 / (INPUT_DIM as f64).sqrt();
    let w2_std = 1.5 / (FEATURE_DIM as f64).sqrt();
    let w1 = (0..FEATURE_DIM * INPUT_DIM)
        .map(|_| rng.standard_normal() * w1_std)
        .collect();
    let b1 = (0..FEATURE_DIM)
        .map(|_| rng.standard_normal() * 0.1)
        .collect();
    let w2 = (0..FEATURE_DIM * FEATURE_DIM)
        .map(|_| rng.standard_normal() * w2_std)
        .collect();
    let b2 = (0..FEATURE_DIM)
        .map(|_| rng.standard_normal() * 0.1)
        .collect();
    let heads = TaskKind::ALL
        .iter()
        .map(|t| Head::random(t.output_dim(), 1.0, &mut rng))
        .collect();
    let mut world = WorldModel {
        domain,
        seed,
        w1,
        b1,
        w2,
        b2,
        heads,
        depth_noise: 0.0,
        normal_noise: 0.0,
    };
    world.calibrate();
    world
}

impl WorldModel {
    pub fn features(&self, x: &[f64; INPUT_DIM]) -> [f64; FEATURE_DIM] {
        let mut hidden = [0.0; FEATURE_DIM];
        for (o, slot) in hidden.iter_mut().enumerate() {
            let row = &self.w1[o * INPUT_DIM..(o + 1) * INPUT_DIM];
            *slot = (self.b1[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        let mut h = [0.0; FEATURE_DIM];
        for (o, slot) in h.iter_mut().enumerate() {
            let row = &self.w2[o * FEATURE_DIM..(o + 1) * FEATURE_DIM];
            *slot = (self.b2[o] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        h
    }

    fn head(&self, task: TaskKind) -> &Head {
        &self.heads[task.index()]
    }

    fn head_mut(&mut self, task: TaskKind) -> &mut Head {
        &mut self.heads[task.index()]
    }

    fn draw_input(&self, rng: &mut RngStream) -> [f64; INPUT_DIM] {
        let shift = match self.domain {
            Domain::A => 0.0,
            Domain::B => DOMAIN_B_SHIFT,
        };
        let mut x = [0.0; INPUT_DIM];
        for v in &mut x {
            *v = rng.standard_normal() + shift;
        }
        x
    }

    /// Rescales heads so regression targets have unit spread, places the edge
    /// threshold at the 80th percentile and balances the class argmaxes.
    fn calibrate(&mut self) {
        let mut rng = RngStream::derive(self.seed, 0xca1_0000 + self.domain.code(), "calibration");
        let feats: Vec<[f64; FEATURE_DIM]> = (0..CALIBRATION_SAMPLES)
            .map(|_| {
                let x = self.draw_input(&mut rng);
                self.features(&x)
            })
            .collect();

        let depth: Vec<f64> = feats
            .iter()
            .map(|h| self.head(TaskKind::Depth).apply(h)[0])
            .collect();
        let (mean, std) = mean_std(&depth);
        let head = self.head_mut(TaskKind::Depth);
        head.scale(1.0 / std);
        head.bias[0] = 2.0 - mean / std;
        self.depth_noise = REGRESSION_NOISE;

        let edge: Vec<f64> = feats
            .iter()
            .map(|h| self.head(TaskKind::Edge).apply(h)[0])
            .collect();
        let (_, std) = mean_std(&edge);
        let head = self.head_mut(TaskKind::Edge);
        head.scale(3.0 / std);
        let mut logits: Vec<f64> = edge.iter().map(|v| v * 3.0 / std).collect();
        logits.sort_by(f64::total_cmp);
        let q = logits[((1.0 - EDGE_POSITIVE_RATE) * logits.len() as f64) as usize];
        head.bias[0] = -q;

        let mut comp_std = 0.0;
        for c in 0..3 {
            let vals: Vec<f64> = feats
                .iter()
                .map(|h| self.head(TaskKind::Normals).apply(h)[c])
                .collect();
            comp_std += mean_std(&vals).1 / 3.0;
        }
        let head = self.head_mut(TaskKind::Normals);
        head.scale(1.0 / comp_std);
        head.bias = vec![0.0, 0.0, 1.0];
        self.normal_noise = REGRESSION_NOISE;

        for task in [TaskKind::SemSeg, TaskKind::Parts] {
            let classes = task.output_dim();
            let spread = {
                let all: Vec<f64> = feats
                    .iter()
                    .flat_map(|h| self.head(task).apply(h))
                    .collect();
                mean_std(&all).1
            };
            self.head_mut(task).scale(2.0 / spread);
            for _ in 0..30 {
                let mut counts = vec![0usize; classes];
                for h in &feats {
                    counts[argmax(&self.head(task).apply(h))] += 1;
                }
                let head = self.head_mut(task);
                for (c, count) in counts.iter().enumerate() {
                    let freq = (*count as f64 + 1.0) / (CALIBRATION_SAMPLES + classes) as f64;
                    head.bias[c] -= 0.5 * (freq * classes as f64).ln();
                }
            }
        }
    }

    /// Draws one labelled sample from this world.
    pub fn sample(&self, rng: &mut RngStream) -> Sample {
        let x = self.draw_input(rng);
        let h = self.features(&x);
        let depth =
            self.head(TaskKind::Depth).apply(&h)[0] + self.depth_noise * rng.standard_normal();

        let mut edge = self.head(TaskKind::Edge).apply(&h)[0] > 0.0;
        if rng.uniform() < LABEL_FLIP {
            edge = !edge;
        }

        let raw = self.head(TaskKind::Normals).apply(&h);
        let mut normal = [0.0; 3];
        for (c, v) in raw.iter().enumerate() {
            normal[c] = v + self.normal_noise * rng.standard_normal();
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        normal.iter_mut().for_each(|v| *v /= norm);

        let class_label = |task: TaskKind, rng: &mut RngStream| {
            let mut c = argmax(&self.head(task).apply(&h));
            if rng.uniform() < LABEL_FLIP {
                c = rng.below(task.output_dim());
            }
            c
        };
        let semseg = class_label(TaskKind::SemSeg, rng);
        let parts = class_label(TaskKind::Parts, rng);
        Sample {
            x,
            labels: Labels {
                depth,
                edge,
                normal,
                semseg,
                parts,
            },
        }
    }

    /// `count` samples from the stream dedicated to `purpose`.
    pub fn draw_pool(&self, purpose: &str, count: usize) -> Vec<Sample> {
        let mut rng = RngStream::derive(self.seed, 0x9001_0000 + self.domain.code(), purpose);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_world() {
        assert_eq!(build_world(3, Domain::A), build_world(3, Domain::A));
        assert_ne!(build_world(3, Domain::A).w1, build_world(3, Domain::B).w1);
    }

    #[test]
    fn normals_are_unit() {
        let w = build_world(1, Domain::A);
        for s in w.draw_pool("test", 500) {
            let n: f64 = s.labels.normal.iter().map(|v| v * v).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn class_histograms_are_not_degenerate() {
        for domain in [Domain::A, Domain::B] {
            let w = build_world(5, domain);
            let pool = w.draw_pool("histogram", 10_000);
            for task in [TaskKind::SemSeg, TaskKind::Parts] {
                let c = task.output_dim();
                let mut counts = vec![0usize; c];
                for s in &pool {
                    match s.labels.target(task) {
                        Target::Class(k) => counts[k] += 1,
                        _ => unreachable!(),
                    }
                }
                let uniform = 1.0 / c as f64;
                for count in counts {
                    let f = count as f64 / pool.len() as f64;
                    assert!(f > uniform / 10.0 && f < 1.0, "{task} {domain}: {f}");
                }
            }
        }
    }

    #[test]
    fn edge_positive_rate_near_twenty_percent() {
        let w = build_world(2, Domain::A);
        let pool = w.draw_pool("rate", 10_000);
        let pos = pool.iter().filter(|s| s.labels.edge).count() as f64 / 10_000.0;
        assert!((pos - 0.2).abs() < 0.03, "{pos}");
    }

    #[test]
    fn domain_b_inputs_shifted() {
        let w = build_world(2, Domain::B);
        let pool = w.draw_pool("shift", 2000);
        let mean: f64 = pool.iter().map(|s| s.x.iter().sum::<f64>()).sum::<f64>() / (2000.0 * 16.0);
        assert!((mean - DOMAIN_B_SHIFT).abs() < 0.05);
    }
}
