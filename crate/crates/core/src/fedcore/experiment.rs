use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use super::aggregate::{aggregate, check_layouts, payload_range, ServerState};
use super::client::{ClientState, LocalObjective, Regularizer, Schedule};
use super::config::ExperimentConfig;
use super::ledger::{bytes_per_round, CommLedger, LedgerEntry};
use super::report::{
    summarize, write_csv, RoundRow, RunReport, RunStatus, CONFIG_FILE, LEDGER_FILE, LEDGER_HEADER,
    ROUNDS_FILE, ROUNDS_HEADER,
};
use super::strategy::{Strategy, StrategyId};
use crate::error::{FmtlError, Result};
use crate::evalstat::{evaluate, task_key, Split};
use crate::models::ArchKind;
use crate::numkernel::{cosine_warmup_lr, load_checkpoint, save_checkpoint, AdamWConfig};
use crate::synthdata::{make_scenario, Scenario};

/// Tasks a client's model carries. MD models hold a decoder for every task
/// seen in the client's domain, TC models a condition for every task in the
/// scenario; each client trains only its own tasks.
pub fn layout_tasks(
    scenario: &Scenario,
    arch: ArchKind,
    client: usize,
) -> Vec<crate::synthdata::TaskKind> {
    match arch {
        ArchKind::Md => scenario
            .spec
            .domain_tasks(scenario.clients[client].spec.domain),
        ArchKind::Tc => scenario.spec.all_tasks(),
    }
}

/// Outcome of one aggregation round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub round: usize,
    pub ledger: LedgerEntry,
    pub mean_train_loss: f64,
    pub metrics: Vec<RoundRow>,
}

/// A running federation: clients, server state and the byte ledger.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub strategy: StrategyId,
    pub scenario: Arc<Scenario>,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub ledger: CommLedger,
    pub round: usize,
}

impl Federation {
    /// Builds the clients. Fails with `LayoutMismatch` when the strategy
    /// cannot aggregate the clients' models: the baseline does not exist.
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let scenario = Arc::new(make_scenario(&config.scenario_config(seed).spec()?)?);
        Self::with_scenario(config, seed, scenario)
    }

    pub fn with_scenario(
        config: &ExperimentConfig,
        seed: u64,
        scenario: Arc<Scenario>,
    ) -> Result<Self> {
        let strategy = config.strategy_id();
        let opt = AdamWConfig {
            weight_decay: config.weight_decay,
            ..Default::default()
        };
        let mut clients = Vec::with_capacity(scenario.clients.len());
        for (i, ds) in scenario.clients.iter().enumerate() {
            let tasks = layout_tasks(&scenario, config.arch, i);
            clients.push(ClientState::new(
                config.arch,
                Arc::new(ds.clone()),
                &tasks,
                seed,
                opt,
            )?);
        }
        if let Some(path) = &config.warm_start {
            let ckpt = load_checkpoint(path)?;
            for c in clients.iter_mut() {
                if c.params.copy_matching_segments(&ckpt) == 0 {
                    return Err(FmtlError::Config(format!(
                        "warm start {} shares no segment with client {}",
                        path.display(),
                        c.client_id
                    )));
                }
            }
        }
        check_layouts(strategy, &clients)?;
        let mut server = ServerState::new(seed);
        if matches!(strategy.strategy, Strategy::PcGrad | Strategy::CaGrad) {
            let r = payload_range(strategy, &clients[0]);
            server.global = Some(clients[0].params.values()[r].to_vec());
        }
        Ok(Federation {
            config: config.clone(),
            seed,
            strategy,
            scenario,
            clients,
            server,
            ledger: CommLedger::new(strategy),
            round: 0,
        })
    }

    fn objective(&self, client: &ClientState, lr: f64) -> LocalObjective {
        let hyper = &self.config.hyper;
        let range = payload_range(self.strategy, client);
        let regularizer = match self.strategy.strategy {
            Strategy::FedProx => Some(Regularizer {
                strength: hyper.prox_mu,
                reference: client.params.values()[range.clone()].to_vec(),
                range,
            }),
            Strategy::FedAmp => client.amp_anchor.as_ref().map(|u| Regularizer {
                strength: hyper.amp_lambda,
                reference: u.clone(),
                range,
            }),
            Strategy::FedMtl => client.mtl_mean.as_ref().map(|m| Regularizer {
                strength: hyper.fedmtl_lambda,
                reference: m.clone(),
                range,
            }),
            _ => None,
        };
        LocalObjective {
            lr,
            epochs: self.config.epochs(),
            batch_size: self.config.batch_size,
            regularizer,
            schedule: if self.strategy.strategy == Strategy::FedRep {
                Schedule::HeadThenEncoder
            } else {
                Schedule::Joint
            },
        }
    }

    /// G-FL and P-FL metrics of every client's current model.
    pub fn evaluate(&self) -> Result<Vec<RoundRow>> {
        let round = self.round;
        let per_client = |c: &ClientState| -> Result<Vec<RoundRow>> {
            let tasks = c.tasks();
            let domain = c.dataset.spec.domain;
            let global = self.scenario.global_test(domain).ok_or_else(|| {
                FmtlError::Argument(format!("no global test pool for domain {domain}"))
            })?;
            let mut rows = Vec::new();
            for (split, data) in [
                (Split::G, global),
                (Split::P, c.dataset.local_test.as_slice()),
            ] {
                for s in evaluate(&c.params, c.arch, data, &tasks)? {
                    rows.push(RoundRow {
                        round,
                        client_id: c.client_id,
                        task: task_key(domain, s.task),
                        split,
                        metric_name: s.metric.name().to_string(),
                        value: s.value,
                    });
                }
            }
            Ok(rows)
        };
        let nested: Vec<Vec<RoundRow>> = if self.config.parallel {
            self.clients
                .par_iter()
                .map(per_client)
                .collect::<Result<_>>()?
        } else {
            self.clients.iter().map(per_client).collect::<Result<_>>()?
        };
        Ok(nested.into_iter().flatten().collect())
    }

    /// Local training on every client, then aggregation.
    pub fn step(&mut self) -> Result<RoundResult> {
        let lr = cosine_warmup_lr(
            self.round,
            self.config.rounds,
            self.config.base_lr,
            self.config.warmup,
        )?;
        let objectives: Vec<LocalObjective> =
            self.clients.iter().map(|c| self.objective(c, lr)).collect();
        let losses: Vec<f64> = if self.config.parallel {
            self.clients
                .par_iter_mut()
                .zip(objectives.par_iter())
                .map(|(c, o)| c.local_train(o))
                .collect::<Result<_>>()?
        } else {
            self.clients
                .iter_mut()
                .zip(&objectives)
                .map(|(c, o)| c.local_train(o))
                .collect::<Result<_>>()?
        };
        aggregate(
            self.strategy,
            &self.config.hyper,
            &mut self.clients,
            &mut self.server,
        )?;
        self.round += 1;
        let (up, down) = bytes_per_round(
            self.strategy,
            self.clients.len(),
            self.clients[0].encoder_range().len(),
            self.clients[0].params.len(),
        );
        self.ledger.record(self.round, up, down);
        let eval_now = self.round.is_multiple_of(self.config.eval_interval)
            || self.round == self.config.rounds;
        Ok(RoundResult {
            round: self.round,
            ledger: *self.ledger.entries.last().expect("just recorded"),
            mean_train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            metrics: if eval_now {
                self.evaluate()?
            } else {
                Vec::new()
            },
        })
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub report: RunReport,
}

fn write_config(dir: &Path, config: &ExperimentConfig, seed: u64, run_id: &str) -> Result<()> {
    let resolved = ExperimentConfig {
        seeds: vec![seed],
        ..config.clone()
    };
    let doc = json!({
        "run_id": run_id,
        "seed": seed,
        "config_hash": run_id.rsplit('-').next(),
        "local_epochs_resolved": config.epochs(),
        "config": resolved,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(dir.join(CONFIG_FILE), text)?;
    Ok(())
}

/// Runs one seed of `config` and writes its artifacts to
/// `out_root/<run_id>/`. An aggregation that the client models cannot
/// support is recorded as a `null_baseline` report rather than an error.
/// With `target`, the report carries Δ% against it.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed: u64,
    out_root: &Path,
    target: Option<&RunReport>,
) -> Result<RunOutcome> {
    config.validate()?;
    let run_id = config.run_id(seed);
    let dir = out_root.join(&run_id);
    std::fs::create_dir_all(&dir)?;
    write_config(&dir, config, seed, &run_id)?;
    let mut report = RunReport {
        run_id: run_id.clone(),
        status: RunStatus::Done,
        null_reason: None,
        scenario: config.scenario.name().to_string(),
        arch: config.arch.to_string(),
        strategy: config.strategy_id().to_string(),
        seed,
        rounds: config.rounds,
        final_round: 0,
        metrics: Vec::new(),
        bytes_up: 0,
        bytes_down: 0,
        bytes_total: 0,
        target: None,
        delta_g_percent: None,
        delta_p_percent: None,
    };

    let mut fed = match Federation::new(config, seed) {
        Ok(f) => f,
        Err(FmtlError::LayoutMismatch(reason)) => {
            report.status = RunStatus::NullBaseline;
            report.null_reason = Some(reason);
            write_csv::<RoundRow>(&dir.join(ROUNDS_FILE), &[], &ROUNDS_HEADER)?;
            write_csv::<LedgerEntry>(&dir.join(LEDGER_FILE), &[], &LEDGER_HEADER)?;
            report.save(&dir)?;
            return Ok(RunOutcome {
                run_dir: dir,
                report,
            });
        }
        Err(e) => return Err(e),
    };

    let mut rows = fed.evaluate()?;
    for _ in 0..config.rounds {
        rows.extend(fed.step()?.metrics);
    }
    write_csv(&dir.join(ROUNDS_FILE), &rows, &ROUNDS_HEADER)?;
    write_csv(&dir.join(LEDGER_FILE), &fed.ledger.entries, &LEDGER_HEADER)?;
    for c in &fed.clients {
        save_checkpoint(
            &dir.join(format!("client_{}_final.fmtlckpt", c.client_id)),
            &c.params,
        )?;
    }
    report.final_round = fed.round;
    report.metrics = summarize(&rows, fed.round);
    report.bytes_up = fed.ledger.total_up();
    report.bytes_down = fed.ledger.total_down();
    report.bytes_total = fed.ledger.total();
    if let Some(t) = target {
        report.attach_target(t)?;
    }
    report.save(&dir)?;
    Ok(RunOutcome {
        run_dir: dir,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedcore::report::read_rounds;
    use crate::synthdata::ScenarioId;

    fn small(strategy: Strategy, scenario: ScenarioId, arch: ArchKind) -> ExperimentConfig {
        ExperimentConfig {
            scenario,
            arch,
            strategy,
            rounds: 3,
            warmup: 1,
            local_epochs: Some(1),
            pool_a: crate::synthdata::PoolSizes {
                train: 160,
                test: 40,
            },
            pool_b: crate::synthdata::PoolSizes {
                train: 80,
                test: 40,
            },
            ..Default::default()
        }
    }

    #[test]
    fn every_strategy_runs_on_iid() {
        for s in Strategy::ALL {
            for arch in [ArchKind::Md, ArchKind::Tc] {
                let cfg = small(s, ScenarioId::Iid1, arch);
                let mut fed = Federation::new(&cfg, 1).unwrap();
                for _ in 0..cfg.rounds {
                    let r = fed.step().unwrap();
                    assert!(r.mean_train_loss.is_finite(), "{s:?} {arch}");
                }
                assert!(fed.evaluate().unwrap().iter().all(|r| r.value.is_finite()));
            }
        }
    }

    #[test]
    fn null_rule_in_cross_domain_md() {
        let cfg = small(Strategy::FedAvg, ScenarioId::Niid6, ArchKind::Md);
        assert!(matches!(
            Federation::new(&cfg, 0),
            Err(FmtlError::LayoutMismatch(_))
        ));
        let e = ExperimentConfig {
            decoupled: true,
            ..cfg.clone()
        };
        assert!(Federation::new(&e, 0).is_ok());
        let tc = ExperimentConfig {
            arch: ArchKind::Tc,
            ..cfg
        };
        assert!(Federation::new(&tc, 0).is_ok());
    }

    #[test]
    fn fedavg_leaves_identical_models() {
        let cfg = small(Strategy::FedAvg, ScenarioId::Niid2, ArchKind::Md);
        let mut fed = Federation::new(&cfg, 2).unwrap();
        fed.step().unwrap();
        for c in &fed.clients[1..] {
            assert_eq!(c.params, fed.clients[0].params);
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = small(Strategy::FedAmp, ScenarioId::Niid3, ArchKind::Tc);
        let seq = ExperimentConfig {
            parallel: false,
            ..cfg.clone()
        };
        let mut a = Federation::new(&cfg, 5).unwrap();
        let mut b = Federation::new(&seq, 5).unwrap();
        for _ in 0..cfg.rounds {
            assert_eq!(a.step().unwrap(), b.step().unwrap());
        }
        for (x, y) in a.clients.iter().zip(&b.clients) {
            assert_eq!(x.params, y.params);
        }
    }

    #[test]
    fn artifacts_and_local_ledger() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(Strategy::Local, ScenarioId::Iid1, ArchKind::Md);
        let out = run_experiment(&cfg, 0, dir.path(), None).unwrap();
        assert_eq!(out.report.bytes_total, 0);
        for f in [
            CONFIG_FILE,
            ROUNDS_FILE,
            LEDGER_FILE,
            "report.json",
            "client_0_final.fmtlckpt",
        ] {
            assert!(out.run_dir.join(f).exists(), "{f}");
        }
        let rows = read_rounds(&out.run_dir).unwrap();
        assert_eq!(summarize(&rows, cfg.rounds), out.report.metrics);
        let rounds: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.round).collect();
        assert_eq!(rounds.into_iter().collect::<Vec<_>>(), vec![0, 2, 3]);

        let fed = small(Strategy::FedAvg, ScenarioId::Iid1, ArchKind::Md);
        let with_target = run_experiment(&fed, 0, dir.path(), Some(&out.report)).unwrap();
        assert!(with_target.report.delta_g_percent.unwrap().is_finite());
        let mut again = RunReport::load(&out.run_dir).unwrap();
        again.attach_target(&out.report).unwrap();
        assert_eq!(again.delta_g_percent, Some(0.0));
    }

    #[test]
    fn null_baseline_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(Strategy::FedProx, ScenarioId::Niid6, ArchKind::Md);
        let out = run_experiment(&cfg, 0, dir.path(), None).unwrap();
        assert_eq!(out.report.status, RunStatus::NullBaseline);
        assert!(out.report.null_reason.is_some());
    }

    #[test]
    fn warm_start_copies_shared_segments() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(Strategy::FedAvg, ScenarioId::Iid1, ArchKind::Md);
        let donor = Federation::new(
            &ExperimentConfig {
                seeds: vec![9],
                ..cfg.clone()
            },
            9,
        )
        .unwrap();
        let path = dir.path().join("w.fmtlckpt");
        save_checkpoint(&path, &donor.clients[0].params).unwrap();
        let warm = ExperimentConfig {
            warm_start: Some(path),
            ..cfg
        };
        let fed = Federation::new(&warm, 1).unwrap();
        assert_eq!(
            fed.clients[2].params.values(),
            donor.clients[0].params.values()
        );
    }
}
