use std::ops::Range;

use super::client::ClientState;
use super::strategy::{Strategy, StrategyId, StrategyParams};
use crate::error::{FmtlError, Result};
use crate::mtlopt::{cagrad, pcgrad, GradientSet};
use crate::numkernel::RngStream;

/// Diagonal left to a FedAMP row whose off-diagonal mass had to be rescaled.
pub const AMP_RESCUE_EPS: f64 = 1e-3;

/// Server-side state carried across rounds.
#[derive(Debug, Clone)]
pub struct ServerState {
    /// Global shared vector for the pseudo-gradient strategies.
    pub global: Option<Vec<f64>>,
    pub rng: RngStream,
}

impl ServerState {
    pub fn new(seed: u64) -> Self {
        ServerState {
            global: None,
            rng: RngStream::derive(seed, 0, "server"),
        }
    }
}

/// Checks that the clients can take part in `strategy`: full-vector
/// strategies need one common layout, decoupled ones a common encoder.
pub fn check_layouts(strategy: StrategyId, clients: &[ClientState]) -> Result<()> {
    let Some(first) = clients.first() else {
        return Err(FmtlError::Argument("federation has no clients".into()));
    };
    if strategy.strategy == Strategy::Local {
        return Ok(());
    }
    for c in &clients[1..] {
        if strategy.decoupled {
            if c.encoder_range() != first.encoder_range() {
                return Err(FmtlError::LayoutMismatch(format!(
                    "client {} encoder differs from client {}",
                    c.client_id, first.client_id
                )));
            }
        } else if !c.params.layout().is_compatible(first.params.layout()) {
            return Err(FmtlError::LayoutMismatch(format!(
                "clients {} and {} have different parameter layouts; {strategy} needs identical models",
                first.client_id, c.client_id
            )));
        }
    }
    Ok(())
}

/// Coordinates a strategy reads and writes on each client.
pub fn payload_range(strategy: StrategyId, client: &ClientState) -> Range<usize> {
    if strategy.decoupled {
        client.encoder_range()
    } else {
        0..client.params.len()
    }
}

/// Uniform mean in the anchored form `v_0 + Σ_{k>0} (v_k − v_0)/K`, so equal
/// inputs come back unchanged bit for bit.
pub fn mean_vectors(vectors: &[&[f64]]) -> Vec<f64> {
    let k = vectors.len() as f64;
    let mut out = vectors[0].to_vec();
    for v in &vectors[1..] {
        for ((o, x), x0) in out.iter_mut().zip(*v).zip(vectors[0]) {
            *o += (x - x0) / k;
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// FedAMP mixing matrix. Off-diagonal `ξ_kj = α·exp(−||θ_k − θ_j||²/(σP))`,
/// diagonal `1 − Σ_j ξ_kj`; a row whose diagonal would go negative has its
/// off-diagonal part rescaled to sum to `1 − AMP_RESCUE_EPS`.
pub fn fedamp_weights(vectors: &[&[f64]], alpha: f64, sigma: f64) -> Vec<Vec<f64>> {
    let k = vectors.len();
    let p = vectors[0].len().max(1) as f64;
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        let mut off = 0.0;
        for j in 0..k {
            if i != j {
                let w = alpha * (-sq_dist(vectors[i], vectors[j]) / (sigma * p)).exp();
                rows[i][j] = w;
                off += w;
            }
        }
        if off > 1.0 {
            let scale = (1.0 - AMP_RESCUE_EPS) / off;
            rows[i].iter_mut().for_each(|w| *w *= scale);
            off = 1.0 - AMP_RESCUE_EPS;
        }
        rows[i][i] = 1.0 - off;
    }
    rows
}

/// MaT-FL grouping: row `k` is a softmax with temperature `τ` over
/// `−||E_k − E_j||²/(σP)`, including `j = k`.
pub fn matfl_weights(vectors: &[&[f64]], tau: f64, sigma: f64) -> Vec<Vec<f64>> {
    let k = vectors.len();
    let p = vectors[0].len().max(1) as f64;
    (0..k)
        .map(|i| {
            let logits: Vec<f64> = (0..k)
                .map(|j| -sq_dist(vectors[i], vectors[j]) / (sigma * p) / tau)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.iter().map(|e| e / total).collect()
        })
        .collect()
}

fn mix(vectors: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, w) in vectors.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(*v) {
            *o += w * x;
        }
    }
    out
}

/// New global vector after one pseudo-gradient step with server step 1:
/// `global − combine({global − θ_k})`.
pub fn pseudo_gradient_step(
    strategy: Strategy,
    global: &[f64],
    locals: &[&[f64]],
    params: &StrategyParams,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let grads: Vec<Vec<f64>> = locals
        .iter()
        .map(|l| global.iter().zip(*l).map(|(g, x)| g - x).collect())
        .collect();
    let set = GradientSet::from_vecs(grads)?;
    let direction = match strategy {
        Strategy::PcGrad => pcgrad(&set, rng),
        Strategy::CaGrad => cagrad(&set, &params.cagrad),
        other => {
            return Err(FmtlError::Argument(format!(
                "{} is not a pseudo-gradient strategy",
                other.display_name()
            )));
        }
    };
    Ok(global.iter().zip(&direction).map(|(g, d)| g - d).collect())
}

fn write_payload(client: &mut ClientState, range: &Range<usize>, values: &[f64]) {
    client.params.values_mut()[range.clone()].copy_from_slice(values);
}

/// Server aggregation for one round. Updates the clients in place with the
/// parameters (or regulariser references) they start the next round from.
pub fn aggregate(
    strategy: StrategyId,
    params: &StrategyParams,
    clients: &mut [ClientState],
    server: &mut ServerState,
) -> Result<()> {
    check_layouts(strategy, clients)?;
    if strategy.strategy == Strategy::Local {
        return Ok(());
    }
    let range = payload_range(strategy, &clients[0]);
    let payloads: Vec<Vec<f64>> = clients
        .iter()
        .map(|c| c.params.values()[range.clone()].to_vec())
        .collect();
    let views: Vec<&[f64]> = payloads.iter().map(|v| v.as_slice()).collect();
    match strategy.strategy {
        Strategy::Local => {}
        Strategy::FedAvg | Strategy::FedProx | Strategy::FedRep => {
            let avg = mean_vectors(&views);
            for c in clients.iter_mut() {
                write_payload(c, &range, &avg);
            }
        }
        Strategy::FedAmp => {
            let xi = fedamp_weights(&views, params.amp_alpha, params.amp_sigma);
            for (c, row) in clients.iter_mut().zip(&xi) {
                // Clients keep training their own vector; u_k only anchors
                // the proximal pull.
                c.amp_anchor = Some(mix(&views, row));
            }
        }
        Strategy::MatFl => {
            let w = matfl_weights(&views, params.matfl_tau, params.matfl_sigma);
            for (c, row) in clients.iter_mut().zip(&w) {
                let e = mix(&views, row);
                write_payload(c, &range, &e);
            }
        }
        Strategy::FedMtl => {
            let mean = mean_vectors(&views);
            for c in clients.iter_mut() {
                c.mtl_mean = Some(mean.clone());
            }
        }
        Strategy::PcGrad | Strategy::CaGrad => {
            let global = server.global.take().ok_or_else(|| {
                FmtlError::Argument("pseudo-gradient server has no global model".into())
            })?;
            let next =
                pseudo_gradient_step(strategy.strategy, &global, &views, params, &mut server.rng)?;
            for c in clients.iter_mut() {
                write_payload(c, &range, &next);
            }
            server.global = Some(next);
        }
    }
    Ok(())
}
