use std::ops::Range;
use std::sync::Arc;

use crate::error::{FmtlError, Result};
use crate::models::{
    decoder_segment, forward_backward, init_params, taskcond_segment, ArchKind, ENCODER,
    SHARED_DECODER,
};
use crate::numkernel::{AdamWConfig, AdamWState, RngStream, SegmentedParams};
use crate::synthdata::{ClientDataset, Sample, TaskKind};

/// Quadratic pull `(strength/2)·||θ[range] − reference||²`, shared by the
/// FedProx, FedAMP and FedMTL local objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub strength: f64,
    pub reference: Vec<f64>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Every epoch updates all of the client's parameters.
    Joint,
    /// `max(epochs − 1, 1)` epochs on the head with the encoder frozen, then
    /// one epoch on the encoder with the head frozen.
    HeadThenEncoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalObjective {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub regularizer: Option<Regularizer>,
    pub schedule: Schedule,
}

/// One client's model, optimiser and data.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub arch: ArchKind,
    pub dataset: Arc<ClientDataset>,
    pub params: SegmentedParams,
    pub optimizer: AdamWState,
    pub rng: RngStream,
    /// `q_{k,t}`: uniform over the client's own tasks.
    pub task_weights: Vec<(TaskKind, f64)>,
    /// FedAMP personalised cloud model over the shared range.
    pub amp_anchor: Option<Vec<f64>>,
    /// FedMTL mean of all client vectors over the shared range.
    pub mtl_mean: Option<Vec<f64>>,
}

impl ClientState {
    /// Parameters for `layout_tasks` drawn from the experiment's shared init
    /// stream, so every client starts from the same values segment by segment.
    pub fn new(
        arch: ArchKind,
        dataset: Arc<ClientDataset>,
        layout_tasks: &[TaskKind],
        seed: u64,
        optimizer: AdamWConfig,
    ) -> Result<Self> {
        let own = &dataset.spec.tasks;
        if let Some(t) = own.iter().find(|t| !layout_tasks.contains(t)) {
            return Err(FmtlError::TaskMismatch(format!(
                "client task {t} is missing from its model layout"
            )));
        }
        let params = init_params(arch, layout_tasks, &mut RngStream::derive(seed, 0, "init"))?;
        let w = 1.0 / own.len() as f64;
        let client_id = dataset.spec.client_id;
        Ok(ClientState {
            client_id,
            arch,
            optimizer: AdamWState::new(params.len(), optimizer),
            params,
            rng: RngStream::derive(seed, client_id as u64, "shuffle"),
            task_weights: own.iter().map(|t| (*t, w)).collect(),
            amp_anchor: None,
            mtl_mean: None,
            dataset,
        })
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.task_weights.iter().map(|(t, _)| *t).collect()
    }

    pub fn encoder_range(&self) -> Range<usize> {
        self.params
            .layout()
            .range(ENCODER)
            .expect("every layout has an encoder")
    }

    /// Non-encoder segments this client trains.
    pub fn head_ranges(&self) -> Vec<Range<usize>> {
        let layout = self.params.layout();
        let mut names = Vec::new();
        if self.arch == ArchKind::Tc {
            names.push(SHARED_DECODER.to_string());
        }
        for (t, _) in &self.task_weights {
            names.push(match self.arch {
                ArchKind::Md => decoder_segment(*t),
                ArchKind::Tc => taskcond_segment(*t),
            });
        }
        names.iter().filter_map(|n| layout.range(n)).collect()
    }

    /// Encoder plus head: every coordinate this client ever updates. Decoders
    /// of tasks the client does not hold stay untouched.
    pub fn active_ranges(&self) -> Vec<Range<usize>> {
        let mut r = vec![self.encoder_range()];
        r.extend(self.head_ranges());
        r
    }

    fn run_epoch(
        &mut self,
        lr: f64,
        batch_size: usize,
        reg: Option<&Regularizer>,
        ranges: &[Range<usize>],
    ) -> Result<f64> {
        let data = Arc::clone(&self.dataset);
        let train = &data.train;
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|i| &train[*i]).collect();
            let mut out = forward_backward(self.arch, &self.params, &batch, &self.task_weights)?;
            if let Some(reg) = reg {
                let p = &self.params.values()[reg.range.clone()];
                for ((g, v), r) in out.grad[reg.range.clone()]
                    .iter_mut()
                    .zip(p)
                    .zip(&reg.reference)
                {
                    *g += reg.strength * (v - r);
                }
            }
            self.optimizer
                .step_ranges(self.params.values_mut(), &out.grad, lr, ranges)?;
            loss_sum += out.combined;
            batches += 1;
        }
        Ok(loss_sum / batches.max(1) as f64)
    }

    /// Local training; returns the mean batch loss of the last epoch.
    pub fn local_train(&mut self, objective: &LocalObjective) -> Result<f64> {
        if objective.epochs == 0 || objective.batch_size == 0 {
            return Err(FmtlError::Argument(
                "local training needs at least one epoch and a positive batch size".into(),
            ));
        }
        if self.dataset.train.is_empty() {
            return Err(FmtlError::Argument(format!(
                "client {} has no training data",
                self.client_id
            )));
        }
        let reg = objective.regularizer.as_ref().filter(|r| r.strength != 0.0);
        if let Some(r) = reg {
            if r.range.end > self.params.len() || r.reference.len() != r.range.len() {
                return Err(FmtlError::shape(
                    "regularizer reference",
                    r.range.len(),
                    r.reference.len(),
                ));
            }
        }
        let last = match objective.schedule {
            Schedule::Joint => {
                let ranges = self.active_ranges();
                let mut last = 0.0;
                for _ in 0..objective.epochs {
                    last = self.run_epoch(objective.lr, objective.batch_size, reg, &ranges)?;
                }
                last
            }
            Schedule::HeadThenEncoder => {
                let head = self.head_ranges();
                for _ in 0..objective.epochs.saturating_sub(1).max(1) {
                    self.run_epoch(objective.lr, objective.batch_size, reg, &head)?;
                }
                let enc = [self.encoder_range()];
                self.run_epoch(objective.lr, objective.batch_size, reg, &enc)?
            }
        };
        Ok(last)
    }
}
