use serde::{Deserialize, Serialize};

use super::strategy::{Strategy, StrategyId};

/// Bytes per transmitted real.
pub const BYTES_PER_REAL: u64 = 8;

/// Upload and download bytes for one round.
///
/// The payload is the encoder for decoupled strategies and the full vector
/// otherwise. FedMTL exchanges every client's vector with every client, so
/// both directions carry `K` payloads per client.
pub fn bytes_per_round(
    strategy: StrategyId,
    clients: usize,
    encoder_len: usize,
    total_len: usize,
) -> (u64, u64) {
    let k = clients as u64;
    let payload = if strategy.decoupled {
        encoder_len
    } else {
        total_len
    } as u64
        * BYTES_PER_REAL;
    match strategy.strategy {
        Strategy::Local => (0, 0),
        Strategy::FedMtl => (k * k * payload, k * k * payload),
        _ => (k * payload, k * payload),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub strategy: Option<StrategyId>,
    pub entries: Vec<LedgerEntry>,
}

impl CommLedger {
    pub fn new(strategy: StrategyId) -> Self {
        CommLedger {
            strategy: Some(strategy),
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, round: usize, bytes_up: u64, bytes_down: u64) {
        debug_assert!(self.entries.last().is_none_or(|e| e.round < round));
        self.entries.push(LedgerEntry {
            round,
            bytes_up,
            bytes_down,
        });
    }

    pub fn total_up(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes_up).sum()
    }

    pub fn total_down(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes_down).sum()
    }

    pub fn total(&self) -> u64 {
        self.total_up() + self.total_down()
    }

    /// Running totals after each round.
    pub fn cumulative(&self) -> Vec<(usize, u64)> {
        let mut acc = 0;
        self.entries
            .iter()
            .map(|e| {
                acc += e.bytes_up + e.bytes_down;
                (e.round, acc)
            })
            .collect()
    }
}
