use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FmtlError, Result};
use crate::models::{predict, task_loss, ArchKind};
use crate::numkernel::SegmentedParams;
use crate::synthdata::{Domain, MetricKind, Sample, Target, TaskKind, INPUT_DIM};

/// Global (withheld pool) or personal (client's local split) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    G,
    P,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::G => "G",
            Split::P => "P",
        })
    }
}

/// Column key for a task: the bare task name in domain A, `<task>@B` in
/// domain B, so the same task in two domains stays separate.
pub fn task_key(domain: Domain, task: TaskKind) -> String {
    match domain {
        Domain::A => task.name().to_string(),
        Domain::B => format!("{}@B", task.name()),
    }
}

/// One task score from one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub baseline_id: String,
    pub seed: u64,
    /// `None` for a model evaluated on behalf of the whole federation.
    pub client_id: Option<usize>,
    pub split: Split,
    pub task: String,
    pub metric_name: String,
    pub value: f64,
    pub lower_is_better: bool,
}

/// Score of one task, before it is attached to a run context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskScore {
    pub task: TaskKind,
    pub metric: MetricKind,
    pub value: f64,
}

impl TaskScore {
    pub fn into_record(
        self,
        baseline_id: &str,
        seed: u64,
        client_id: Option<usize>,
        split: Split,
        domain: Domain,
    ) -> MetricRecord {
        MetricRecord {
            baseline_id: baseline_id.to_string(),
            seed,
            client_id,
            split,
            task: task_key(domain, self.task),
            metric_name: self.metric.name().to_string(),
            value: self.value,
            lower_is_better: self.metric.lower_is_better(),
        }
    }
}

fn rmse(preds: &[Vec<f64>], samples: &[Sample]) -> f64 {
    let sse: f64 = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| (p[0] - s.labels.depth).powi(2))
        .sum();
    (sse / samples.len() as f64).sqrt()
}

fn angular_error_deg(pred: &[f64], y: &[f64; 3]) -> f64 {
    let norm = pred.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 90.0;
    }
    let cos = pred.iter().zip(y).map(|(p, t)| p * t).sum::<f64>() / norm;
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Mean per-class recall over the classes present in the labels.
pub fn macro_accuracy(predicted: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (p, l) in predicted.iter().zip(labels) {
        totals[*l] += 1;
        if p == l {
            hits[*l] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, t)| **t > 0)
        .map(|(h, t)| *h as f64 / *t as f64)
        .collect();
    present.iter().sum::<f64>() / present.len() as f64
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Scores one task from raw network outputs.
pub fn score_predictions(task: TaskKind, preds: &[Vec<f64>], samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(FmtlError::Argument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    if preds.len() != samples.len() {
        return Err(FmtlError::shape("predictions", samples.len(), preds.len()));
    }
    Ok(match task.metric() {
        MetricKind::Rmse => rmse(preds, samples),
        MetricKind::WeightedBceLoss => {
            let mut total = 0.0;
            for (p, s) in preds.iter().zip(samples) {
                total += task_loss(task, p, s.labels.target(task))?;
            }
            total / samples.len() as f64
        }
        MetricKind::MeanAngularErrorDeg => {
            preds
                .iter()
                .zip(samples)
                .map(|(p, s)| angular_error_deg(p, &s.labels.normal))
                .sum::<f64>()
                / samples.len() as f64
        }
        MetricKind::MacroAccuracy => {
            let predicted: Vec<usize> = preds.iter().map(|p| argmax(p)).collect();
            let labels: Vec<usize> = samples
                .iter()
                .map(|s| match s.labels.target(task) {
                    Target::Class(c) => c,
                    _ => unreachable!("segmentation tasks carry class targets"),
                })
                .collect();
            macro_accuracy(&predicted, &labels, task.output_dim())
        }
    })
}

/// Task metrics of `params` over `samples`, in the order of `tasks`.
pub fn evaluate(
    params: &SegmentedParams,
    arch: ArchKind,
    samples: &[Sample],
    tasks: &[TaskKind],
) -> Result<Vec<TaskScore>> {
    if samples.is_empty() {
        return Err(FmtlError::Argument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let inputs: Vec<&[f64; INPUT_DIM]> = samples.iter().map(|s| &s.x).collect();
    tasks
        .iter()
        .map(|task| {
            let preds = predict(arch, params, &inputs, *task)?;
            Ok(TaskScore {
                task: *task,
                metric: task.metric(),
                value: score_predictions(*task, &preds, samples)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{build_world, Domain};

    fn pool() -> Vec<Sample> {
        build_world(5, Domain::A).draw_pool("metrics", 40)
    }

    #[test]
    fn perfect_depth_has_zero_rmse() {
        let samples = pool();
        let preds: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.labels.depth]).collect();
        assert_eq!(
            score_predictions(TaskKind::Depth, &preds, &samples).unwrap(),
            0.0
        );
    }

    #[test]
    fn angular_error_extremes() {
        let samples = pool();
        let exact: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.labels.normal.iter().map(|v| v * 2.0).collect())
            .collect();
        assert!(score_predictions(TaskKind::Normals, &exact, &samples).unwrap() < 1e-5);
        assert!((angular_error_deg(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]) - 90.0).abs() < 1e-12);
        assert!((angular_error_deg(&[0.0, 0.0, -3.0], &[0.0, 0.0, 1.0]) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let labels: Vec<usize> = (0..80).map(|i| i % 8).collect();
        let predicted = vec![3usize; 80];
        assert_eq!(macro_accuracy(&predicted, &labels, 8), 0.125);
        assert_eq!(macro_accuracy(&labels, &labels, 8), 1.0);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(score_predictions(TaskKind::Depth, &[], &[]).is_err());
    }

    #[test]
    fn split_label_does_not_change_values() {
        let samples = pool();
        let params = crate::models::init_params(
            ArchKind::Md,
            &TaskKind::DOMAIN_A,
            &mut crate::numkernel::RngStream::new(1, 1),
        )
        .unwrap();
        let scores = evaluate(&params, ArchKind::Md, &samples, &TaskKind::DOMAIN_A).unwrap();
        for s in &scores {
            let g = s.into_record("x", 0, Some(1), Split::G, Domain::A);
            let p = s.into_record("x", 0, Some(1), Split::P, Domain::A);
            assert_eq!(g.value, p.value);
            assert_eq!(g.task, p.task);
            assert!(g.value.is_finite());
        }
        assert_eq!(task_key(Domain::B, TaskKind::Parts), "parts_like@B");
    }
}
