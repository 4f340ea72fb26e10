//! Open-row DRAM model with layout-dependent key addressing.
//!
//! One physical mapping serves both layouts: global row `addr / row_bytes`,
//! bank `global_row % banks`, with one open row per bank. The layouts differ
//! only in where a `(key, plane)` lands: bit-interleaved storage keeps a
//! plane's bits for consecutive keys adjacent, so plane-granular fetch
//! streams ride open rows; key-major (row-major) storage keeps one key's
//! planes adjacent, so the same streams hop rows and pay activations.

use super::config::{Layout, SimConfig};
use serde::{Deserialize, Serialize};

/// Geometry needed to replay a request stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DramGeometry {
    pub banks: usize,
    pub row_bytes: usize,
    pub channels: usize,
    pub max_outstanding: usize,
    pub latency_cycles: u64,
    pub activation_penalty_cycles: u64,
    pub bytes_per_transaction: usize,
    /// Keys in the tensor (sizes the plane-major regions).
    pub seq_len: usize,
    /// Bytes of one bit plane of one key (`dim / 8`).
    pub plane_bytes: usize,
    /// Planes per key.
    pub planes: u32,
}

impl DramGeometry {
    pub fn from_config(cfg: &SimConfig, seq_len: usize, dim: usize, bits: u32) -> Self {
        DramGeometry {
            banks: cfg.banks,
            row_bytes: cfg.dram_row_bytes,
            channels: cfg.channels,
            max_outstanding: cfg.max_outstanding_requests,
            latency_cycles: cfg.dram_latency_cycles,
            activation_penalty_cycles: cfg.activation_penalty_cycles,
            bytes_per_transaction: cfg.bytes_per_transaction,
            seq_len,
            plane_bytes: dim.div_ceil(8),
            planes: bits,
        }
    }

    /// Byte address of `(key, plane)` under the layout.
    pub fn address(&self, layout: Layout, key: usize, plane: u32) -> usize {
        match layout {
            Layout::BitInterleaved => {
                plane as usize * self.seq_len * self.plane_bytes + key * self.plane_bytes
            }
            Layout::RowMajor => {
                key * self.planes as usize * self.plane_bytes + plane as usize * self.plane_bytes
            }
        }
    }

    pub fn bank_and_row(&self, addr: usize) -> (usize, usize) {
        let global_row = addr / self.row_bytes;
        (global_row % self.banks, global_row / self.banks)
    }
}

/// Open-row state across banks; counts activations.
#[derive(Debug, Clone)]
pub struct BankState {
    open_rows: Vec<Option<usize>>,
    pub activations: u64,
}

impl BankState {
    pub fn new(banks: usize) -> Self {
        BankState {
            open_rows: vec![None; banks],
            activations: 0,
        }
    }

    /// Touch an address; returns true when the access opened a new row.
    pub fn access(&mut self, geom: &DramGeometry, addr: usize) -> bool {
        let (bank, row) = geom.bank_and_row(addr);
        if self.open_rows[bank] == Some(row) {
            false
        } else {
            self.open_rows[bank] = Some(row);
            self.activations += 1;
            true
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramStats {
    pub transactions: u64,
    pub row_activations: u64,
    pub cycles: u64,
}

/// Replay a plane-granular fetch stream through the layout model.
///
/// Requests issue in order, one per cycle per channel, at most
/// `max_outstanding` in flight per channel; each takes the base latency plus
/// the activation penalty when it opens a row. Returns totals and the cycle
/// the last response lands.
pub fn model_dram_access(
    stream: &[(usize, u32)],
    layout: Layout,
    geom: &DramGeometry,
) -> DramStats {
    let mut banks = BankState::new(geom.banks);
    let mut transactions = 0u64;
    // Per-channel completion times of in-flight requests.
    let mut inflight: Vec<Vec<u64>> = vec![Vec::new(); geom.channels];
    let mut next_issue: Vec<u64> = vec![0; geom.channels];
    let mut last_done = 0u64;
    for &(key, plane) in stream {
        let addr = geom.address(layout, key, plane);
        let (bank, _) = geom.bank_and_row(addr);
        let activated = banks.access(geom, addr);
        let service = geom.latency_cycles
            + if activated { geom.activation_penalty_cycles } else { 0 };
        transactions += geom.plane_bytes.div_ceil(geom.bytes_per_transaction).max(1) as u64;
        let ch = bank % geom.channels;
        // Earliest issue: after the previous issue on this channel, and once
        // an outstanding slot frees up.
        let mut t = next_issue[ch];
        inflight[ch].retain(|&done| done > t);
        while inflight[ch].len() >= geom.max_outstanding {
            let min_done = *inflight[ch].iter().min().unwrap();
            t = t.max(min_done);
            inflight[ch].retain(|&done| done > t);
        }
        let done = t + service;
        inflight[ch].push(done);
        next_issue[ch] = t + 1;
        last_done = last_done.max(done);
    }
    DramStats {
        transactions,
        row_activations: banks.activations,
        cycles: last_done,
    }
}
