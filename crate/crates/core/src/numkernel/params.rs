use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};

/// A named, contiguous slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered segment table describing how a flat vector is carved up.
///
/// Segments are contiguous, non-overlapping, start at zero and have unique
/// names. Deserialization re-validates these properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct Layout {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for Layout {
    type Error = FmtlError;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut cursor = 0usize;
        for seg in &segments {
            if !seen.insert(seg.name.as_str()) {
                return Err(FmtlError::Argument(format!(
                    "duplicate segment name `{}`",
                    seg.name
                )));
            }
            if seg.offset != cursor {
                return Err(FmtlError::Argument(format!(
                    "segment `{}` starts at {} but previous segment ends at {}",
                    seg.name, seg.offset, cursor
                )));
            }
            cursor += seg.len;
        }
        Ok(Layout { segments })
    }
}

impl From<Layout> for Vec<Segment> {
    fn from(layout: Layout) -> Self {
        layout.segments
    }
}

impl Layout {
    /// Builds a layout from `(name, length)` pairs, assigning offsets in order.
    pub fn from_lengths<I, S>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let segments = parts
            .into_iter()
            .map(|(name, len)| {
                let seg = Segment {
                    name: name.into(),
                    offset,
                    len,
                };
                offset += len;
                seg
            })
            .collect::<Vec<_>>();
        Layout::try_from(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.get(name).map(Segment::range)
    }

    /// Compatible layouts have identical `(name, length)` sequences.
    pub fn is_compatible(&self, other: &Layout) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.name == b.name && a.len == b.len)
    }

    fn describe(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{}[{}]", s.name, s.len))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub(crate) fn ensure_compatible(&self, other: &Layout) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(FmtlError::LayoutMismatch(format!(
                "({}) vs ({})",
                self.describe(),
                other.describe()
            )))
        }
    }
}

/// Flat `f64` parameter vector paired with its segment layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedParams {
    values: Vec<f64>,
    layout: Layout,
}

impl SegmentedParams {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(FmtlError::shape(
                "SegmentedParams::new",
                layout.total_len(),
                values.len(),
            ));
        }
        Ok(SegmentedParams { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.total_len()];
        SegmentedParams { values, layout }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.range(name)?;
        Some(&mut self.values[range])
    }

    /// Overwrites every segment that `other` also carries with the same length.
    /// Returns the number of segments copied.
    pub fn copy_matching_segments(&mut self, other: &SegmentedParams) -> usize {
        let mut copied = 0;
        for seg in other.layout.segments() {
            if let Some(dst) = self.layout.get(&seg.name).cloned() {
                if dst.len == seg.len {
                    self.values[dst.range()].copy_from_slice(&other.values[seg.range()]);
                    copied += 1;
                }
            }
        }
        copied
    }
}

/// Element-wise `Σ w_k θ_k`, accumulated in ascending list order.
///
/// When the weights sum to one the result is formed as
/// `θ_0 + Σ_{k>0} w_k (θ_k − θ_0)`, so a set of identical inputs is returned
/// bit-for-bit unchanged.
pub fn weighted_sum(params_list: &[&SegmentedParams], weights: &[f64]) -> Result<SegmentedParams> {
    if params_list.is_empty() {
        return Err(FmtlError::Argument("weighted_sum of an empty list".into()));
    }
    if params_list.len() != weights.len() {
        return Err(FmtlError::shape(
            "weighted_sum weights",
            params_list.len(),
            weights.len(),
        ));
    }
    let first = params_list[0];
    for p in &params_list[1..] {
        first.layout.ensure_compatible(&p.layout)?;
    }
    let weight_total: f64 = weights.iter().sum();
    let convex = (weight_total - 1.0).abs() <= 1e-12 * weights.len() as f64;
    let mut out = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let acc = if convex {
            let base = first.values[i];
            let mut delta = 0.0;
            for (p, w) in params_list.iter().zip(weights).skip(1) {
                delta += w * (p.values[i] - base);
            }
            base + delta
        } else {
            let mut acc = 0.0;
            for (p, w) in params_list.iter().zip(weights) {
                acc += w * p.values[i];
            }
            acc
        };
        out.push(acc);
    }
    SegmentedParams::new(first.layout.clone(), out)
}
