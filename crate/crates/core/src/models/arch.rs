use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};
use crate::numkernel::{Layout, RngStream, SegmentedParams};
use crate::synthdata::{TaskKind, FEATURE_DIM, INPUT_DIM};

pub const ENCODER_HIDDEN: usize = 64;
pub const ENCODER_OUT: usize = FEATURE_DIM;
pub const MD_DECODER_HIDDEN: usize = 32;
pub const TC_EMBED: usize = 8;
pub const TC_HIDDEN: usize = 32;
pub const TC_OUT: usize = 16;

pub const ENCODER: &str = "encoder";
pub const SHARED_DECODER: &str = "decoder:shared";

pub fn decoder_segment(task: TaskKind) -> String {
    format!("decoder:{}", task.name())
}

pub fn taskcond_segment(task: TaskKind) -> String {
    format!("taskcond:{}", task.name())
}

/// Multi-decoder (one decoder per task) or task-conditioned single decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    #[serde(rename = "MD")]
    Md,
    #[serde(rename = "TC")]
    Tc,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Md => "MD",
            ArchKind::Tc => "TC",
        })
    }
}

impl FromStr for ArchKind {
    type Err = FmtlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" => Ok(ArchKind::Md),
            "tc" => Ok(ArchKind::Tc),
            _ => Err(FmtlError::Config(format!("unknown architecture `{s}`"))),
        }
    }
}

/// Fully connected layer stored row-major (`out × inp` weights, then `out` biases)
/// at `offset` within the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub offset: usize,
    pub inp: usize,
    pub out: usize,
}

impl Dense {
    pub const fn count(inp: usize, out: usize) -> usize {
        inp * out + out
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &params[self.offset..self.offset + self.inp * self.out];
        let b = &params
            [self.offset + self.inp * self.out..self.offset + self.inp * self.out + self.out];
        for o in 0..self.out {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y[o] = acc;
        }
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// writes the input gradient into `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let wn = self.inp * self.out;
        {
            let gw = &mut grad[self.offset..self.offset + wn];
            for o in 0..self.out {
                let d = dy[o];
                if d != 0.0 {
                    let row = &mut gw[o * self.inp..(o + 1) * self.inp];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
        let gb = &mut grad[self.offset + wn..self.offset + wn + self.out];
        for (g, d) in gb.iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            let w = &params[self.offset..self.offset + wn];
            dx.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..self.out {
                let d = dy[o];
                if d != 0.0 {
                    let row = &w[o * self.inp..(o + 1) * self.inp];
                    for (dxi, wi) in dx.iter_mut().zip(row) {
                        *dxi += d * wi;
                    }
                }
            }
        }
    }
}

pub(crate) const ENCODER_COUNT: usize =
    Dense::count(INPUT_DIM, ENCODER_HIDDEN) + Dense::count(ENCODER_HIDDEN, ENCODER_OUT);
pub(crate) const TC_SHARED_COUNT: usize =
    Dense::count(ENCODER_OUT + TC_EMBED, TC_HIDDEN) + Dense::count(TC_HIDDEN, TC_OUT);

pub(crate) fn md_decoder_count(task: TaskKind) -> usize {
    Dense::count(ENCODER_OUT, MD_DECODER_HIDDEN)
        + Dense::count(MD_DECODER_HIDDEN, task.output_dim())
}

pub(crate) fn taskcond_count(task: TaskKind) -> usize {
    TC_EMBED + Dense::count(TC_OUT, task.output_dim())
}

/// Sorted, de-duplicated task list; empty sets are rejected.
pub(crate) fn normalize_tasks(tasks: &[TaskKind]) -> Result<Vec<TaskKind>> {
    let set: BTreeSet<TaskKind> = tasks.iter().copied().collect();
    if set.is_empty() {
        return Err(FmtlError::Config("model needs at least one task".into()));
    }
    Ok(set.into_iter().collect())
}

impl ArchKind {
    pub fn layout(self, tasks: &[TaskKind]) -> Result<Layout> {
        let tasks = normalize_tasks(tasks)?;
        let mut parts = vec![(ENCODER.to_string(), ENCODER_COUNT)];
        match self {
            ArchKind::Md => {
                parts.extend(
                    tasks
                        .iter()
                        .map(|t| (decoder_segment(*t), md_decoder_count(*t))),
                );
            }
            ArchKind::Tc => {
                parts.push((SHARED_DECODER.to_string(), TC_SHARED_COUNT));
                parts.extend(
                    tasks
                        .iter()
                        .map(|t| (taskcond_segment(*t), taskcond_count(*t))),
                );
            }
        }
        Layout::from_lengths(parts)
    }

    /// Dense layers and embeddings making up `segment`, in storage order.
    fn segment_blocks(self, segment: &str) -> Vec<Block> {
        if segment == ENCODER {
            return vec![
                Block::Dense(INPUT_DIM, ENCODER_HIDDEN),
                Block::Dense(ENCODER_HIDDEN, ENCODER_OUT),
            ];
        }
        if segment == SHARED_DECODER {
            return vec![
                Block::Dense(ENCODER_OUT + TC_EMBED, TC_HIDDEN),
                Block::Dense(TC_HIDDEN, TC_OUT),
            ];
        }
        let task_of = |prefix: &str| {
            segment
                .strip_prefix(prefix)
                .and_then(|t| t.parse::<TaskKind>().ok())
                .expect("segment produced by ArchKind::layout")
        };
        if segment.starts_with("taskcond:") {
            let t = task_of("taskcond:");
            vec![
                Block::Embedding(TC_EMBED),
                Block::Dense(TC_OUT, t.output_dim()),
            ]
        } else {
            let t = task_of("decoder:");
            vec![
                Block::Dense(ENCODER_OUT, MD_DECODER_HIDDEN),
                Block::Dense(MD_DECODER_HIDDEN, t.output_dim()),
            ]
        }
    }
}

enum Block {
    Dense(usize, usize),
    Embedding(usize),
}

/// Kaiming-normal weights (std `sqrt(2 / fan_in)`), zero biases, unit-normal
/// task embeddings. Each segment draws from a sub-stream keyed by its name,
/// so equally named segments initialise identically across clients.
pub fn init_params(
    arch: ArchKind,
    tasks: &[TaskKind],
    rng: &mut RngStream,
) -> Result<SegmentedParams> {
    let layout = arch.layout(tasks)?;
    let base = rng.next_seed();
    let mut values = Vec::with_capacity(layout.total_len());
    for seg in layout.segments() {
        let mut sub = RngStream::derive(base, 0, &seg.name);
        for block in arch.segment_blocks(&seg.name) {
            match block {
                Block::Dense(inp, out) => {
                    let std = (2.0 / inp as f64).sqrt();
                    values.extend((0..inp * out).map(|_| sub.standard_normal() * std));
                    values.extend(std::iter::repeat_n(0.0, out));
                }
                Block::Embedding(n) => values.extend((0..n).map(|_| sub.standard_normal())),
            }
        }
    }
    SegmentedParams::new(layout, values)
}

/// Parameter accounting for one architecture / task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub segments: Vec<(String, usize)>,
    pub encoder: usize,
    pub total: usize,
    pub encoder_fraction: f64,
}

pub fn param_report(arch: ArchKind, tasks: &[TaskKind]) -> Result<ParamReport> {
    let layout = arch.layout(tasks)?;
    let segments: Vec<(String, usize)> = layout
        .segments()
        .iter()
        .map(|s| (s.name.clone(), s.len))
        .collect();
    let total = layout.total_len();
    Ok(ParamReport {
        segments,
        encoder: ENCODER_COUNT,
        total,
        encoder_fraction: ENCODER_COUNT as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_count_matches_topology() {
        assert_eq!(ENCODER_COUNT, 16 * 64 + 64 + 64 * 32 + 32);
        assert_eq!(ENCODER_COUNT, 3168);
    }

    #[test]
    fn segment_counts() {
        let md = ArchKind::Md.layout(&TaskKind::DOMAIN_A).unwrap();
        assert_eq!(md.segments().len(), 5);
        let tc = ArchKind::Tc.layout(&TaskKind::DOMAIN_A).unwrap();
        assert_eq!(tc.segments().len(), 6);
        assert!(ArchKind::Md.layout(&[]).is_err());
    }

    #[test]
    fn tc_shares_more() {
        let md = param_report(ArchKind::Md, &TaskKind::DOMAIN_A).unwrap();
        let tc = param_report(ArchKind::Tc, &TaskKind::DOMAIN_A).unwrap();
        assert!(tc.encoder_fraction > md.encoder_fraction);
        for t in TaskKind::ALL {
            assert!(taskcond_count(t) * 5 < TC_SHARED_COUNT);
        }
    }

    #[test]
    fn adding_a_task_adds_one_decoder() {
        let three = param_report(
            ArchKind::Md,
            &[TaskKind::Depth, TaskKind::Edge, TaskKind::Normals],
        )
        .unwrap();
        let four = param_report(ArchKind::Md, &TaskKind::DOMAIN_A).unwrap();
        assert_eq!(four.total - three.total, md_decoder_count(TaskKind::SemSeg));
    }

    #[test]
    fn tc_trunk_is_task_independent() {
        let a = ArchKind::Tc.layout(&[TaskKind::Depth]).unwrap();
        let b = ArchKind::Tc
            .layout(&[TaskKind::Normals, TaskKind::Parts])
            .unwrap();
        assert_eq!(
            a.segments()[..2]
                .iter()
                .map(|s| (&s.name, s.len))
                .collect::<Vec<_>>(),
            b.segments()[..2]
                .iter()
                .map(|s| (&s.name, s.len))
                .collect::<Vec<_>>()
        );
        let c = ArchKind::Md.layout(&[TaskKind::Depth]).unwrap();
        let d = ArchKind::Md.layout(&[TaskKind::Normals]).unwrap();
        assert!(!c.is_compatible(&d));
    }

    #[test]
    fn init_is_deterministic_and_shares_by_name() {
        let mut r1 = RngStream::new(4, 1);
        let mut r2 = RngStream::new(4, 1);
        let a = init_params(ArchKind::Md, &TaskKind::DOMAIN_A, &mut r1).unwrap();
        let b = init_params(ArchKind::Md, &TaskKind::DOMAIN_A, &mut r2).unwrap();
        assert_eq!(a, b);
        let mut r3 = RngStream::new(4, 1);
        let c = init_params(ArchKind::Md, &[TaskKind::Normals, TaskKind::Parts], &mut r3).unwrap();
        assert_eq!(a.segment(ENCODER), c.segment(ENCODER));
        assert_eq!(
            a.segment("decoder:normals_like"),
            c.segment("decoder:normals_like")
        );
    }
}
