//! Run metrics and the energy accounting identity.
//!
//! Every field here is part of the stable report schema; the metrics
//! dictionary chapter of the book documents each one. `energy_pj` is always
//! the exact weighted sum `bits_fetched * dram_pj_per_bit +
//! sram_accesses * sram_pj_per_access + (pe busy + value-unit busy) *
//! pe_pj_per_cycle`.

use super::config::EnergyModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimMetrics {
    pub total_cycles: u64,
    /// Busy cycles per global lane (`row * lanes_per_row + lane`).
    pub busy_cycles: Vec<u64>,
    /// Aggregate busy fraction over engaged lane-cycles, in [0, 1].
    pub utilization: f64,
    pub dram_transactions: u64,
    pub bits_fetched: u64,
    pub row_activations: u64,
    pub planes_computed: u64,
    pub sram_accesses: u64,
    pub memory_stall_cycles: u64,
    pub inter_pe_stall_cycles: u64,
    /// Serialization cycles beyond one per plane, summed over computed planes.
    pub intra_pe_stall_cycles: u64,
    pub scoreboard_peak_occupancy: usize,
    pub retained_keys: u64,
    pub vpu_busy_cycles: u64,
    /// Online-softmax rescale events, counted on the functional value path.
    pub rescale_ops: u64,
    pub energy_pj: f64,
}

impl SimMetrics {
    pub fn total_busy(&self) -> u64 {
        self.busy_cycles.iter().sum()
    }

    /// Recompute the energy identity from the counters.
    pub fn energy_from_counters(&self, energy: &EnergyModel) -> f64 {
        self.bits_fetched as f64 * energy.dram_pj_per_bit
            + self.sram_accesses as f64 * energy.sram_pj_per_access
            + (self.total_busy() + self.vpu_busy_cycles) as f64 * energy.pe_pj_per_cycle
    }

    /// Flat `(name, value)` view shared by the CSV and JSON report writers.
    pub fn flat_fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("total_cycles", self.total_cycles as f64),
            ("utilization", self.utilization),
            ("dram_transactions", self.dram_transactions as f64),
            ("bits_fetched", self.bits_fetched as f64),
            ("row_activations", self.row_activations as f64),
            ("planes_computed", self.planes_computed as f64),
            ("sram_accesses", self.sram_accesses as f64),
            ("memory_stall_cycles", self.memory_stall_cycles as f64),
            ("inter_pe_stall_cycles", self.inter_pe_stall_cycles as f64),
            ("intra_pe_stall_cycles", self.intra_pe_stall_cycles as f64),
            ("scoreboard_peak_occupancy", self.scoreboard_peak_occupancy as f64),
            ("retained_keys", self.retained_keys as f64),
            ("vpu_busy_cycles", self.vpu_busy_cycles as f64),
            ("rescale_ops", self.rescale_ops as f64),
            ("energy_pj", self.energy_pj),
        ]
    }
}
