use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FmtlError;

/// The five synthetic task families. Each mirrors one dense-prediction task
/// in output shape and in how it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "depth_like")]
    Depth,
    #[serde(rename = "edge_like")]
    Edge,
    #[serde(rename = "normals_like")]
    Normals,
    #[serde(rename = "semseg_like")]
    SemSeg,
    #[serde(rename = "parts_like")]
    Parts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    WeightedBceLoss,
    MeanAngularErrorDeg,
    MacroAccuracy,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::WeightedBceLoss => "weighted_bce_loss",
            MetricKind::MeanAngularErrorDeg => "mean_angular_error_deg",
            MetricKind::MacroAccuracy => "macro_accuracy",
        }
    }

    pub fn lower_is_better(self) -> bool {
        !matches!(self, MetricKind::MacroAccuracy)
    }
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Depth,
        TaskKind::Edge,
        TaskKind::Normals,
        TaskKind::SemSeg,
        TaskKind::Parts,
    ];

    /// The four tasks available in the primary domain.
    pub const DOMAIN_A: [TaskKind; 4] = [
        TaskKind::Depth,
        TaskKind::Edge,
        TaskKind::Normals,
        TaskKind::SemSeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Depth => "depth_like",
            TaskKind::Edge => "edge_like",
            TaskKind::Normals => "normals_like",
            TaskKind::SemSeg => "semseg_like",
            TaskKind::Parts => "parts_like",
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Depth | TaskKind::Edge => 1,
            TaskKind::Normals => 3,
            TaskKind::SemSeg => 8,
            TaskKind::Parts => 6,
        }
    }

    /// Number of classes for the segmentation-like tasks.
    pub fn classes(self) -> Option<usize> {
        match self {
            TaskKind::SemSeg | TaskKind::Parts => Some(self.output_dim()),
            _ => None,
        }
    }

    pub fn metric(self) -> MetricKind {
        match self {
            TaskKind::Depth => MetricKind::Rmse,
            TaskKind::Edge => MetricKind::WeightedBceLoss,
            TaskKind::Normals => MetricKind::MeanAngularErrorDeg,
            TaskKind::SemSeg | TaskKind::Parts => MetricKind::MacroAccuracy,
        }
    }

    pub fn lower_is_better(self) -> bool {
        self.metric().lower_is_better()
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = FmtlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix("_like").unwrap_or(&key);
        Ok(match key {
            "depth" => TaskKind::Depth,
            "edge" => TaskKind::Edge,
            "normals" | "normal" => TaskKind::Normals,
            "semseg" => TaskKind::SemSeg,
            "parts" => TaskKind::Parts,
            _ => return Err(FmtlError::Config(format!("unknown task `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
}

impl Domain {
    pub(crate) fn code(self) -> u64 {
        match self {
            Domain::A => 0,
            Domain::B => 1,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::A => f.write_str("A"),
            Domain::B => f.write_str("B"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_table() {
        assert_eq!(TaskKind::Depth.output_dim(), 1);
        assert_eq!(TaskKind::Edge.metric(), MetricKind::WeightedBceLoss);
        assert_eq!(TaskKind::Normals.output_dim(), 3);
        assert_eq!(TaskKind::SemSeg.classes(), Some(8));
        assert_eq!(TaskKind::Parts.classes(), Some(6));
        assert!(TaskKind::Normals.lower_is_better());
        assert!(!TaskKind::SemSeg.lower_is_better());
        assert!(!TaskKind::Parts.lower_is_better());
    }

    #[test]
    fn parse_names() {
        for t in TaskKind::ALL {
            assert_eq!(t.name().parse::<TaskKind>().unwrap(), t);
        }
        assert_eq!("semseg".parse::<TaskKind>().unwrap(), TaskKind::SemSeg);
        assert!("saliency".parse::<TaskKind>().is_err());
        assert_eq!(
            serde_json::to_string(&TaskKind::Parts).unwrap(),
            "\"parts_like\""
        );
    }
}
