use super::arch::{
    decoder_segment, taskcond_segment, ArchKind, Dense, ENCODER, ENCODER_HIDDEN, ENCODER_OUT,
    MD_DECODER_HIDDEN, SHARED_DECODER, TC_EMBED, TC_HIDDEN, TC_OUT,
};
use super::loss::loss_and_grad;
use crate::error::{FmtlError, Result};
use crate::numkernel::SegmentedParams;
use crate::synthdata::{Sample, TaskKind, INPUT_DIM};

/// Per-task weights `q_{k,t}` of the local objective.
pub type TaskWeights = [(TaskKind, f64)];

/// Activations of the shared encoder kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pre_hidden: [f64; ENCODER_HIDDEN],
    hidden: [f64; ENCODER_HIDDEN],
    pre_feature: [f64; ENCODER_OUT],
    pub feature: [f64; ENCODER_OUT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Batch-mean loss `ℓ_{k,t}` of every task with positive weight.
    pub task_losses: Vec<(TaskKind, f64)>,
    /// `Σ q_t ℓ_t / Σ q_t`.
    pub combined: f64,
    pub grad: Vec<f64>,
}

fn relu_into(src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = s.max(0.0);
    }
}

fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, p) in grad.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

struct EncoderLayers {
    l1: Dense,
    l2: Dense,
}

impl EncoderLayers {
    fn locate(params: &SegmentedParams) -> Result<Self> {
        let seg = params
            .layout()
            .get(ENCODER)
            .ok_or_else(|| FmtlError::LayoutMismatch("layout has no encoder segment".into()))?;
        let l1 = Dense {
            offset: seg.offset,
            inp: INPUT_DIM,
            out: ENCODER_HIDDEN,
        };
        let l2 = Dense {
            offset: seg.offset + Dense::count(INPUT_DIM, ENCODER_HIDDEN),
            inp: ENCODER_HIDDEN,
            out: ENCODER_OUT,
        };
        Ok(EncoderLayers { l1, l2 })
    }

    fn forward(&self, p: &[f64], x: &[f64; INPUT_DIM]) -> ForwardCache {
        let mut c = ForwardCache {
            pre_hidden: [0.0; ENCODER_HIDDEN],
            hidden: [0.0; ENCODER_HIDDEN],
            pre_feature: [0.0; ENCODER_OUT],
            feature: [0.0; ENCODER_OUT],
        };
        self.l1.forward(p, x, &mut c.pre_hidden);
        relu_into(&c.pre_hidden, &mut c.hidden);
        self.l2.forward(p, &c.hidden, &mut c.pre_feature);
        relu_into(&c.pre_feature, &mut c.feature);
        c
    }

    fn backward(
        &self,
        p: &[f64],
        x: &[f64; INPUT_DIM],
        c: &ForwardCache,
        mut d_feature: [f64; ENCODER_OUT],
        grad: &mut [f64],
    ) {
        relu_backward(&c.pre_feature, &mut d_feature);
        let mut d_hidden = [0.0; ENCODER_HIDDEN];
        self.l2
            .backward(p, &c.hidden, &d_feature, grad, Some(&mut d_hidden));
        relu_backward(&c.pre_hidden, &mut d_hidden);
        self.l1.backward(p, x, &d_hidden, grad, None);
    }
}

/// Two dense layers with a ReLU between them; used for MD decoders and the
/// TC shared decoder.
struct TwoLayer {
    a: Dense,
    b: Dense,
}

struct TwoLayerCache {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
}

impl TwoLayer {
    fn forward(&self, p: &[f64], x: &[f64]) -> TwoLayerCache {
        let mut pre = vec![0.0; self.a.out];
        self.a.forward(p, x, &mut pre);
        let mut act = vec![0.0; self.a.out];
        relu_into(&pre, &mut act);
        let mut out = vec![0.0; self.b.out];
        self.b.forward(p, &act, &mut out);
        TwoLayerCache { pre, act, out }
    }

    fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        c: &TwoLayerCache,
        d_out: &[f64],
        grad: &mut [f64],
        dx: &mut [f64],
    ) {
        let mut d_act = vec![0.0; self.a.out];
        self.b.backward(p, &c.act, d_out, grad, Some(&mut d_act));
        relu_backward(&c.pre, &mut d_act);
        self.a.backward(p, x, &d_act, grad, Some(dx));
    }
}

fn segment_offset(params: &SegmentedParams, name: &str, task: TaskKind) -> Result<usize> {
    params.layout().get(name).map(|s| s.offset).ok_or_else(|| {
        FmtlError::TaskMismatch(format!(
            "task {task} has no `{name}` segment in this layout"
        ))
    })
}

fn md_decoder(params: &SegmentedParams, task: TaskKind) -> Result<TwoLayer> {
    let off = segment_offset(params, &decoder_segment(task), task)?;
    Ok(TwoLayer {
        a: Dense {
            offset: off,
            inp: ENCODER_OUT,
            out: MD_DECODER_HIDDEN,
        },
        b: Dense {
            offset: off + Dense::count(ENCODER_OUT, MD_DECODER_HIDDEN),
            inp: MD_DECODER_HIDDEN,
            out: task.output_dim(),
        },
    })
}

struct TcHead {
    embed_offset: usize,
    readout: Dense,
}

fn tc_shared(params: &SegmentedParams) -> Result<TwoLayer> {
    let off = params
        .layout()
        .get(SHARED_DECODER)
        .map(|s| s.offset)
        .ok_or_else(|| FmtlError::LayoutMismatch("TC layout needs a shared decoder".into()))?;
    Ok(TwoLayer {
        a: Dense {
            offset: off,
            inp: ENCODER_OUT + TC_EMBED,
            out: TC_HIDDEN,
        },
        b: Dense {
            offset: off + Dense::count(ENCODER_OUT + TC_EMBED, TC_HIDDEN),
            inp: TC_HIDDEN,
            out: TC_OUT,
        },
    })
}

fn tc_head(params: &SegmentedParams, task: TaskKind) -> Result<TcHead> {
    let off = segment_offset(params, &taskcond_segment(task), task)?;
    Ok(TcHead {
        embed_offset: off,
        readout: Dense {
            offset: off + TC_EMBED,
            inp: TC_OUT,
            out: task.output_dim(),
        },
    })
}

/// Active tasks (positive weight) and their normalised weights.
fn active_weights(q: &TaskWeights) -> Result<Vec<(TaskKind, f64)>> {
    if q.iter().any(|(_, w)| !(*w >= 0.0)) {
        return Err(FmtlError::Argument(
            "task weights must be non-negative".into(),
        ));
    }
    let total: f64 = q.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(FmtlError::Argument("task weights sum to zero".into()));
    }
    Ok(q.iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(t, w)| (*t, w / total))
        .collect())
}

fn finish(q: &[(TaskKind, f64)], sums: Vec<f64>, n: usize, grad: Vec<f64>) -> LossOutput {
    let task_losses: Vec<(TaskKind, f64)> = q
        .iter()
        .zip(&sums)
        .map(|((t, _), s)| (*t, s / n as f64))
        .collect();
    let combined = q
        .iter()
        .zip(&task_losses)
        .map(|((_, w), (_, l))| w * l)
        .sum();
    LossOutput {
        task_losses,
        combined,
        grad,
    }
}

/// Multi-decoder pass: one encoder evaluation per sample feeds every task
/// decoder; returns batch-mean losses and the gradient of the combined loss.
pub fn forward_backward_md(
    params: &SegmentedParams,
    batch: &[&Sample],
    q: &TaskWeights,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(FmtlError::Argument("empty batch".into()));
    }
    let q = active_weights(q)?;
    let enc = EncoderLayers::locate(params)?;
    let decoders = q
        .iter()
        .map(|(t, _)| md_decoder(params, *t))
        .collect::<Result<Vec<_>>>()?;
    let p = params.values();
    let mut grad = vec![0.0; p.len()];
    let mut sums = vec![0.0; q.len()];
    let inv_n = 1.0 / batch.len() as f64;
    for sample in batch {
        let cache = enc.forward(p, &sample.x);
        let mut d_feature = [0.0; ENCODER_OUT];
        for (i, ((task, w), dec)) in q.iter().zip(&decoders).enumerate() {
            let dc = dec.forward(p, &cache.feature);
            let mut d_out = vec![0.0; task.output_dim()];
            sums[i] += loss_and_grad(*task, &dc.out, sample.labels.target(*task), &mut d_out)?;
            d_out.iter_mut().for_each(|g| *g *= w * inv_n);
            let mut d_in = [0.0; ENCODER_OUT];
            dec.backward(p, &cache.feature, &dc, &d_out, &mut grad, &mut d_in);
            for (a, b) in d_feature.iter_mut().zip(&d_in) {
                *a += b;
            }
        }
        enc.backward(p, &sample.x, &cache, d_feature, &mut grad);
    }
    Ok(finish(&q, sums, batch.len(), grad))
}

/// Task-conditioned pass: for each task in turn the shared decoder runs on
/// the encoder feature concatenated with that task's embedding, followed by
/// the task readout.
pub fn forward_backward_tc(
    params: &SegmentedParams,
    batch: &[&Sample],
    q: &TaskWeights,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(FmtlError::Argument("empty batch".into()));
    }
    let q = active_weights(q)?;
    let enc = EncoderLayers::locate(params)?;
    let shared = tc_shared(params)?;
    let heads = q
        .iter()
        .map(|(t, _)| tc_head(params, *t))
        .collect::<Result<Vec<_>>>()?;
    let p = params.values();
    let mut grad = vec![0.0; p.len()];
    let mut sums = vec![0.0; q.len()];
    let inv_n = 1.0 / batch.len() as f64;
    for sample in batch {
        let cache = enc.forward(p, &sample.x);
        let mut d_feature = [0.0; ENCODER_OUT];
        for (i, ((task, w), head)) in q.iter().zip(&heads).enumerate() {
            let mut input = [0.0; ENCODER_OUT + TC_EMBED];
            input[..ENCODER_OUT].copy_from_slice(&cache.feature);
            input[ENCODER_OUT..]
                .copy_from_slice(&p[head.embed_offset..head.embed_offset + TC_EMBED]);
            let sc = shared.forward(p, &input);
            let mut trunk = vec![0.0; TC_OUT];
            relu_into(&sc.out, &mut trunk);
            let mut out = vec![0.0; task.output_dim()];
            head.readout.forward(p, &trunk, &mut out);

            let mut d_out = vec![0.0; task.output_dim()];
            sums[i] += loss_and_grad(*task, &out, sample.labels.target(*task), &mut d_out)?;
            d_out.iter_mut().for_each(|g| *g *= w * inv_n);
            let mut d_trunk = vec![0.0; TC_OUT];
            head.readout
                .backward(p, &trunk, &d_out, &mut grad, Some(&mut d_trunk));
            relu_backward(&sc.out, &mut d_trunk);
            let mut d_input = [0.0; ENCODER_OUT + TC_EMBED];
            shared.backward(p, &input, &sc, &d_trunk, &mut grad, &mut d_input);
            for (a, b) in d_feature.iter_mut().zip(&d_input[..ENCODER_OUT]) {
                *a += b;
            }
            for (g, d) in grad[head.embed_offset..head.embed_offset + TC_EMBED]
                .iter_mut()
                .zip(&d_input[ENCODER_OUT..])
            {
                *g += d;
            }
        }
        enc.backward(p, &sample.x, &cache, d_feature, &mut grad);
    }
    Ok(finish(&q, sums, batch.len(), grad))
}

pub fn forward_backward(
    arch: ArchKind,
    params: &SegmentedParams,
    batch: &[&Sample],
    q: &TaskWeights,
) -> Result<LossOutput> {
    match arch {
        ArchKind::Md => forward_backward_md(params, batch, q),
        ArchKind::Tc => forward_backward_tc(params, batch, q),
    }
}

/// Raw outputs of `task` for every input, in order.
pub fn predict(
    arch: ArchKind,
    params: &SegmentedParams,
    inputs: &[&[f64; INPUT_DIM]],
    task: TaskKind,
) -> Result<Vec<Vec<f64>>> {
    let enc = EncoderLayers::locate(params)?;
    let p = params.values();
    match arch {
        ArchKind::Md => {
            let dec = md_decoder(params, task)?;
            Ok(inputs
                .iter()
                .map(|x| dec.forward(p, &enc.forward(p, x).feature).out)
                .collect())
        }
        ArchKind::Tc => {
            let shared = tc_shared(params)?;
            let head = tc_head(params, task)?;
            Ok(inputs
                .iter()
                .map(|x| {
                    let cache = enc.forward(p, x);
                    let mut input = [0.0; ENCODER_OUT + TC_EMBED];
                    input[..ENCODER_OUT].copy_from_slice(&cache.feature);
                    input[ENCODER_OUT..]
                        .copy_from_slice(&p[head.embed_offset..head.embed_offset + TC_EMBED]);
                    let sc = shared.forward(p, &input);
                    let mut trunk = vec![0.0; TC_OUT];
                    relu_into(&sc.out, &mut trunk);
                    let mut out = vec![0.0; task.output_dim()];
                    head.readout.forward(p, &trunk, &mut out);
                    out
                })
                .collect())
        }
    }
}
