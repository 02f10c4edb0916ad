//! On-disk form of a generated scenario: one binary file per split (rows of
//! little-endian `f64`) plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{ClientSpec, Scenario, ScenarioId};
use super::task::Domain;
use super::world::{Sample, INPUT_DIM};
use crate::error::Result;

/// Column order of every data row.
pub const ROW_COLUMNS: [&str; 6] = [
    "x[16]",
    "depth_like",
    "edge_like(0|1)",
    "normals_like[3]",
    "semseg_like(class)",
    "parts_like(class)",
];
pub const ROW_WIDTH: usize = INPUT_DIM + 1 + 1 + 3 + 1 + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntry {
    #[serde(flatten)]
    pub spec: ClientSpec,
    pub train: FileEntry,
    pub local_test: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoolEntry {
    pub domain: Domain,
    #[serde(flatten)]
    pub file: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub scenario_id: ScenarioId,
    pub seed: u64,
    pub unbalance_ratio: f64,
    pub row_width: usize,
    pub row_columns: Vec<String>,
    pub clients: Vec<ClientEntry>,
    pub global_test: Vec<TestPoolEntry>,
    /// SHA-256 over the manifest body with this field empty.
    pub manifest_hash: String,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_rows(samples: &[Sample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * ROW_WIDTH * 8);
    for s in samples {
        let l = &s.labels;
        let tail = [
            l.depth,
            if l.edge { 1.0 } else { 0.0 },
            l.normal[0],
            l.normal[1],
            l.normal[2],
            l.semseg as f64,
            l.parts as f64,
        ];
        for v in s.x.iter().chain(&tail) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn write_file(dir: &Path, name: String, samples: &[Sample]) -> Result<FileEntry> {
    let bytes = encode_rows(samples);
    fs::write(dir.join(&name), &bytes)?;
    Ok(FileEntry {
        path: name,
        rows: samples.len(),
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

/// Writes every split of `scenario` into `dir` (created if needed).
pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<DataManifest> {
    fs::create_dir_all(dir)?;
    let mut clients = Vec::new();
    for c in &scenario.clients {
        let id = c.spec.client_id;
        clients.push(ClientEntry {
            spec: c.spec.clone(),
            train: write_file(dir, format!("client_{id}_train.bin"), &c.train)?,
            local_test: write_file(dir, format!("client_{id}_local_test.bin"), &c.local_test)?,
        });
    }
    let mut global_test = Vec::new();
    for (domain, pool) in &scenario.global_tests {
        global_test.push(TestPoolEntry {
            domain: *domain,
            file: write_file(dir, format!("global_test_{domain}.bin"), pool)?,
        });
    }
    let mut manifest = DataManifest {
        scenario_id: scenario.spec.scenario_id,
        seed: scenario.spec.seed,
        unbalance_ratio: scenario.spec.unbalance_ratio,
        row_width: ROW_WIDTH,
        row_columns: ROW_COLUMNS.iter().map(|s| s.to_string()).collect(),
        clients,
        global_test,
        manifest_hash: String::new(),
    };
    let body = serde_json::to_vec(&manifest)?;
    manifest.manifest_hash = hex(&Sha256::digest(&body));
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
