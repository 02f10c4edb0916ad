//! Synthetic two-domain multi-task data and the seven partitioning scenarios.

mod export;
mod scenario;
mod task;
mod world;

pub use export::{
    encode_rows, write_scenario, ClientEntry, DataManifest, FileEntry, TestPoolEntry, ROW_COLUMNS,
    ROW_WIDTH,
};
pub use scenario::{
    largest_remainder, local_test_count, make_scenario, pretrain_pool, ClientDataset, ClientSpec,
    PoolSizes, Scenario, ScenarioConfig, ScenarioId, ScenarioSpec,
};
pub use task::{Domain, MetricKind, TaskKind};
pub use world::{
    build_world, Labels, Sample, Target, WorldModel, DOMAIN_B_SHIFT, FEATURE_DIM, INPUT_DIM,
};
