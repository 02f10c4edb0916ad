use crate::error::{FmtlError, Result};
use crate::synthdata::{Target, TaskKind};

/// Positive / negative pixel weights of the edge loss.
pub const EDGE_POS_WEIGHT: f64 = 0.8;
pub const EDGE_NEG_WEIGHT: f64 = 0.2;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dim(task: TaskKind, prediction: &[f64]) -> Result<()> {
    if prediction.len() != task.output_dim() {
        return Err(FmtlError::shape(
            "task prediction",
            task.output_dim(),
            prediction.len(),
        ));
    }
    Ok(())
}

/// Training loss for one prediction. `prediction` holds raw network outputs:
/// a value for depth, a logit for edges, an unnormalised 3-vector for
/// normals and class logits for the segmentation tasks.
pub fn task_loss(task: TaskKind, prediction: &[f64], target: Target<'_>) -> Result<f64> {
    let mut scratch = vec![0.0; prediction.len()];
    loss_and_grad(task, prediction, target, &mut scratch)
}

/// Loss and its gradient with respect to `prediction` (written to `grad`).
pub(crate) fn loss_and_grad(
    task: TaskKind,
    prediction: &[f64],
    target: Target<'_>,
    grad: &mut [f64],
) -> Result<f64> {
    check_dim(task, prediction)?;
    match (task, target) {
        (TaskKind::Depth, Target::Scalar(y)) => {
            let diff = prediction[0] - y;
            grad[0] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            Ok(diff.abs())
        }
        (TaskKind::Edge, Target::Binary(positive)) => {
            let z = prediction[0];
            if positive {
                grad[0] = EDGE_POS_WEIGHT * (sigmoid(z) - 1.0);
                Ok(EDGE_POS_WEIGHT * softplus(-z))
            } else {
                grad[0] = EDGE_NEG_WEIGHT * sigmoid(z);
                Ok(EDGE_NEG_WEIGHT * softplus(z))
            }
        }
        (TaskKind::Normals, Target::Unit(y)) => {
            let norm = prediction
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            let cos = prediction
                .iter()
                .zip(y.iter())
                .map(|(p, t)| p * t)
                .sum::<f64>()
                / norm;
            for c in 0..3 {
                let p = prediction[c] / norm;
                grad[c] = -(y[c] - cos * p) / norm;
            }
            Ok(1.0 - cos)
        }
        (TaskKind::SemSeg | TaskKind::Parts, Target::Class(label)) => {
            if label >= prediction.len() {
                return Err(FmtlError::Argument(format!(
                    "class {label} out of range for {task}"
                )));
            }
            let max = prediction.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = prediction.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            for (g, v) in grad.iter_mut().zip(prediction) {
                *g = (v - lse).exp();
            }
            grad[label] -= 1.0;
            Ok(lse - prediction[label])
        }
        _ => Err(FmtlError::TaskMismatch(format!(
            "target kind does not match task {task}"
        ))),
    }
}
