use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::task::{Domain, TaskKind};
use super::world::{build_world, Sample};
use crate::error::{FmtlError, Result};
use crate::numkernel::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "IID-1")]
    Iid1,
    #[serde(rename = "NIID-2")]
    Niid2,
    #[serde(rename = "NIID-3")]
    Niid3,
    #[serde(rename = "NIID-4")]
    Niid4,
    #[serde(rename = "NIID-5")]
    Niid5,
    #[serde(rename = "NIID-6")]
    Niid6,
    #[serde(rename = "NIID-7")]
    Niid7,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Iid1,
        ScenarioId::Niid2,
        ScenarioId::Niid3,
        ScenarioId::Niid4,
        ScenarioId::Niid5,
        ScenarioId::Niid6,
        ScenarioId::Niid7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Iid1 => "IID-1",
            ScenarioId::Niid2 => "NIID-2",
            ScenarioId::Niid3 => "NIID-3",
            ScenarioId::Niid4 => "NIID-4",
            ScenarioId::Niid5 => "NIID-5",
            ScenarioId::Niid6 => "NIID-6",
            ScenarioId::Niid7 => "NIID-7",
        }
    }

    /// Directory-friendly name, e.g. `niid6`.
    pub fn slug(self) -> String {
        self.name().replace('-', "").to_ascii_lowercase()
    }

    pub fn has_domain_b(self) -> bool {
        matches!(self, ScenarioId::Niid6 | ScenarioId::Niid7)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = FmtlError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.slug() == key)
            .ok_or_else(|| FmtlError::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSizes {
    pub train: usize,
    pub test: usize,
}

/// Knobs from which a [`ScenarioSpec`] is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario_id: ScenarioId,
    pub seed: u64,
    pub pool_a: PoolSizes,
    pub pool_b: PoolSizes,
    pub unbalance_ratio: f64,
    /// Overrides K for the evenly split multi-task scenario (scale study).
    pub client_count: Option<usize>,
    pub pretrain_count: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario_id: ScenarioId::Iid1,
            seed: 0,
            pool_a: PoolSizes {
                train: 2000,
                test: 800,
            },
            pool_b: PoolSizes {
                train: 4000,
                test: 1000,
            },
            unbalance_ratio: 2.0,
            client_count: None,
            pretrain_count: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub client_id: usize,
    pub domain: Domain,
    pub tasks: Vec<TaskKind>,
    /// Samples assigned before the 9:1 local split.
    pub train_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: ScenarioId,
    pub clients: Vec<ClientSpec>,
    pub global_test_counts: Vec<(Domain, usize)>,
    pub unbalance_ratio: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn client_weights(&self) -> Vec<f64> {
        let k = self.clients.len() as f64;
        vec![1.0 / k; self.clients.len()]
    }

    pub fn domains(&self) -> Vec<Domain> {
        self.global_test_counts.iter().map(|(d, _)| *d).collect()
    }

    /// Union of the task sets of every client in `domain`.
    pub fn domain_tasks(&self, domain: Domain) -> Vec<TaskKind> {
        self.clients
            .iter()
            .filter(|c| c.domain == domain)
            .flat_map(|c| c.tasks.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Union of every client's task set.
    pub fn all_tasks(&self) -> Vec<TaskKind> {
        self.clients
            .iter()
            .flat_map(|c| c.tasks.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn pool_size(&self, domain: Domain) -> usize {
        self.clients
            .iter()
            .filter(|c| c.domain == domain)
            .map(|c| c.train_count)
            .sum()
    }
}

/// Splits `total` in proportion to `weights`, rounding by largest remainder
/// so the parts sum exactly to `total`. Ties go to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - parts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

fn geometric_weights(k: usize, ratio: f64) -> Vec<f64> {
    (0..k).map(|i| ratio.powi((k - 1 - i) as i32)).collect()
}

fn clients_for(
    domain: Domain,
    task_sets: Vec<Vec<TaskKind>>,
    counts: Vec<usize>,
    first_id: usize,
) -> Vec<ClientSpec> {
    task_sets
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (tasks, train_count))| ClientSpec {
            client_id: first_id + i,
            domain,
            tasks,
            train_count,
        })
        .collect()
}

impl ScenarioConfig {
    pub fn spec(&self) -> Result<ScenarioSpec> {
        use ScenarioId::*;
        if !(self.unbalance_ratio >= 1.0) {
            return Err(FmtlError::Config(format!(
                "unbalance_ratio must be >= 1, got {}",
                self.unbalance_ratio
            )));
        }
        if let Some(k) = self.client_count {
            if !matches!(self.scenario_id, Iid1 | Niid4) {
                return Err(FmtlError::Config(format!(
                    "client_count override only applies to IID-1 and NIID-4, not {}",
                    self.scenario_id
                )));
            }
            if !(2..=self.pool_a.train).contains(&k) {
                return Err(FmtlError::Config(format!("client_count {k} out of range")));
            }
        }
        let multi = || TaskKind::DOMAIN_A.to_vec();
        let single = || {
            TaskKind::DOMAIN_A
                .iter()
                .map(|t| vec![*t])
                .collect::<Vec<_>>()
        };
        let a_total = self.pool_a.train;
        let b_total = self.pool_b.train;
        let k_multi = self.client_count.unwrap_or(4);

        let clients = match self.scenario_id {
            Iid1 => clients_for(
                Domain::A,
                vec![multi(); k_multi],
                largest_remainder(a_total, &vec![1.0; k_multi]),
                0,
            ),
            Niid2 => clients_for(
                Domain::A,
                single(),
                largest_remainder(a_total, &[1.0; 4]),
                0,
            ),
            Niid3 => {
                let counts = largest_remainder(a_total, &[1.0; 8]);
                let mut sets = vec![multi(); 4];
                sets.extend(single());
                clients_for(Domain::A, sets, counts, 0)
            }
            Niid4 => clients_for(
                Domain::A,
                vec![multi(); k_multi],
                largest_remainder(a_total, &geometric_weights(k_multi, self.unbalance_ratio)),
                0,
            ),
            Niid5 => clients_for(
                Domain::A,
                single(),
                largest_remainder(a_total, &geometric_weights(4, self.unbalance_ratio)),
                0,
            ),
            Niid6 => {
                let mut c = clients_for(
                    Domain::A,
                    vec![multi(); 4],
                    largest_remainder(a_total, &[1.0; 4]),
                    0,
                );
                c.extend(clients_for(
                    Domain::B,
                    vec![vec![TaskKind::Normals, TaskKind::Parts]],
                    vec![b_total],
                    4,
                ));
                c
            }
            Niid7 => {
                let mut c = clients_for(
                    Domain::A,
                    single(),
                    largest_remainder(a_total, &[1.0; 4]),
                    0,
                );
                c.extend(clients_for(
                    Domain::B,
                    vec![vec![TaskKind::Parts], vec![TaskKind::Normals]],
                    largest_remainder(b_total, &[1.0; 2]),
                    4,
                ));
                c
            }
        };
        if let Some(bad) = clients
            .iter()
            .find(|c| c.train_count < 2 || c.tasks.is_empty())
        {
            return Err(FmtlError::Config(format!(
                "client {} would receive {} samples",
                bad.client_id, bad.train_count
            )));
        }
        let mut global_test_counts = vec![(Domain::A, self.pool_a.test)];
        if self.scenario_id.has_domain_b() {
            global_test_counts.push((Domain::B, self.pool_b.test));
        }
        Ok(ScenarioSpec {
            scenario_id: self.scenario_id,
            clients,
            global_test_counts,
            unbalance_ratio: self.unbalance_ratio,
            seed: self.seed,
        })
    }
}

/// One client's local data `D_k`, split 9:1 into train and local test.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub spec: ClientSpec,
    pub train: Vec<Sample>,
    pub local_test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub clients: Vec<ClientDataset>,
    pub global_tests: Vec<(Domain, Vec<Sample>)>,
}

impl Scenario {
    pub fn global_test(&self, domain: Domain) -> Option<&[Sample]> {
        self.global_tests
            .iter()
            .find(|(d, _)| *d == domain)
            .map(|(_, s)| s.as_slice())
    }
}

/// Local test share: one tenth, rounded half up.
pub fn local_test_count(n: usize) -> usize {
    (n + 5) / 10
}

pub fn make_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let mut clients = Vec::with_capacity(spec.clients.len());
    let mut global_tests = Vec::new();
    for &(domain, test_count) in &spec.global_test_counts {
        let world = build_world(spec.seed, domain);
        let pool = world.draw_pool("train", spec.pool_size(domain));
        let mut cursor = 0;
        for c in spec.clients.iter().filter(|c| c.domain == domain) {
            let mut data = pool[cursor..cursor + c.train_count].to_vec();
            cursor += c.train_count;
            RngStream::derive(spec.seed, c.client_id as u64, "local-split").shuffle(&mut data);
            let local_test = data.split_off(data.len() - local_test_count(data.len()));
            clients.push(ClientDataset {
                spec: c.clone(),
                train: data,
                local_test,
            });
        }
        global_tests.push((domain, world.draw_pool("test", test_count)));
    }
    for c in &spec.clients {
        if !spec.global_test_counts.iter().any(|(d, _)| *d == c.domain) {
            return Err(FmtlError::Config(format!(
                "client {} lives in domain {} which has no test pool",
                c.client_id, c.domain
            )));
        }
    }
    clients.sort_by_key(|c| c.spec.client_id);
    Ok(Scenario {
        spec: spec.clone(),
        clients,
        global_tests,
    })
}

/// Domain-A pool for warm-start pre-training, drawn from its own stream so it
/// never overlaps any scenario's train or test pools.
pub fn pretrain_pool(config: &ScenarioConfig) -> ClientDataset {
    let world = build_world(config.seed, Domain::A);
    let mut data = world.draw_pool("pretrain", config.pretrain_count);
    let local_test = data.split_off(data.len() - local_test_count(data.len()));
    ClientDataset {
        spec: ClientSpec {
            client_id: usize::MAX,
            domain: Domain::A,
            tasks: TaskKind::DOMAIN_A.to_vec(),
            train_count: config.pretrain_count,
        },
        train: data,
        local_test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(id: ScenarioId) -> ScenarioConfig {
        ScenarioConfig {
            scenario_id: id,
            pool_a: PoolSizes {
                train: 400,
                test: 80,
            },
            pool_b: PoolSizes {
                train: 600,
                test: 60,
            },
            ..Default::default()
        }
    }

    #[test]
    fn iid1_default_split() {
        let spec = ScenarioConfig::default().spec().unwrap();
        let sc = make_scenario(&spec).unwrap();
        assert_eq!(sc.clients.len(), 4);
        for c in &sc.clients {
            assert_eq!(c.train.len(), 450);
            assert_eq!(c.local_test.len(), 50);
            assert_eq!(c.spec.tasks, TaskKind::DOMAIN_A.to_vec());
        }
    }

    #[test]
    fn niid2_one_distinct_task_each() {
        let spec = cfg(ScenarioId::Niid2).spec().unwrap();
        let mut tasks: Vec<TaskKind> = spec.clients.iter().flat_map(|c| c.tasks.clone()).collect();
        assert!(spec.clients.iter().all(|c| c.tasks.len() == 1));
        tasks.sort();
        assert_eq!(tasks, TaskKind::DOMAIN_A.to_vec());
    }

    #[test]
    fn niid4_geometric_shares() {
        let spec = ScenarioConfig {
            scenario_id: ScenarioId::Niid4,
            pool_a: PoolSizes {
                train: 1500,
                test: 10,
            },
            ..Default::default()
        }
        .spec()
        .unwrap();
        let counts: Vec<usize> = spec.clients.iter().map(|c| c.train_count).collect();
        assert_eq!(counts, vec![800, 400, 200, 100]);
    }

    #[test]
    fn largest_remainder_is_exact() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(
            largest_remainder(7, &[8.0, 4.0, 2.0, 1.0])
                .iter()
                .sum::<usize>(),
            7
        );
    }

    #[test]
    fn structural_patterns() {
        let s3 = cfg(ScenarioId::Niid3).spec().unwrap();
        assert_eq!(s3.clients.len(), 8);
        assert_eq!(s3.clients.iter().filter(|c| c.tasks.len() == 4).count(), 4);

        let s6 = cfg(ScenarioId::Niid6).spec().unwrap();
        assert_eq!(s6.clients.len(), 5);
        assert_eq!(s6.clients[4].domain, Domain::B);
        assert_eq!(
            s6.clients[4].tasks,
            vec![TaskKind::Normals, TaskKind::Parts]
        );
        assert!(s6.clients[4].train_count > s6.clients[0].train_count);

        let s7 = cfg(ScenarioId::Niid7).spec().unwrap();
        assert_eq!(s7.clients.len(), 6);
        assert_eq!(s7.clients[4].tasks, vec![TaskKind::Parts]);
        assert_eq!(s7.clients[5].tasks, vec![TaskKind::Normals]);
    }

    #[test]
    fn totals_match_pools() {
        for id in ScenarioId::ALL {
            let c = cfg(id);
            let spec = c.spec().unwrap();
            assert_eq!(spec.pool_size(Domain::A), c.pool_a.train, "{id}");
            if id.has_domain_b() {
                assert_eq!(spec.pool_size(Domain::B), c.pool_b.train, "{id}");
            }
        }
    }

    #[test]
    fn splits_disjoint_and_ratio() {
        for id in ScenarioId::ALL {
            let sc = make_scenario(&cfg(id).spec().unwrap()).unwrap();
            let mut seen: Vec<[u64; 16]> = Vec::new();
            for c in &sc.clients {
                let n = c.train.len() + c.local_test.len();
                assert_eq!(c.local_test.len(), local_test_count(n));
                for s in c.train.iter().chain(&c.local_test) {
                    seen.push(s.x.map(f64::to_bits));
                }
            }
            for (_, pool) in &sc.global_tests {
                for s in pool {
                    seen.push(s.x.map(f64::to_bits));
                }
            }
            let total = seen.len();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), total, "{id}: overlapping samples");
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = cfg(ScenarioId::Niid7).spec().unwrap();
        assert_eq!(make_scenario(&spec).unwrap(), make_scenario(&spec).unwrap());
    }

    #[test]
    fn pretrain_pool_disjoint_and_sized() {
        let c = cfg(ScenarioId::Iid1);
        let pool = pretrain_pool(&c);
        assert_eq!(pool.train.len() + pool.local_test.len(), c.pretrain_count);
        assert_eq!(pretrain_pool(&c), pool);
        let sc = make_scenario(&c.spec().unwrap()).unwrap();
        for client in &sc.clients {
            for s in &client.train {
                assert!(pool.train.iter().all(|p| p.x != s.x));
            }
        }
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("niid6".parse::<ScenarioId>().unwrap(), ScenarioId::Niid6);
        assert_eq!("IID-1".parse::<ScenarioId>().unwrap(), ScenarioId::Iid1);
        assert!("niid9".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn client_count_override() {
        let spec = ScenarioConfig {
            client_count: Some(7),
            ..Default::default()
        }
        .spec()
        .unwrap();
        assert_eq!(spec.clients.len(), 7);
        assert_eq!(spec.pool_size(Domain::A), 2000);
        assert!(ScenarioConfig {
            scenario_id: ScenarioId::Niid2,
            client_count: Some(3),
            ..Default::default()
        }
        .spec()
        .is_err());
    }
}
