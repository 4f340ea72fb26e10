//! Simulator configuration and validation.

use crate::error::{Error, Result};
use crate::tiling::TileOrder;
use serde::{Deserialize, Serialize};

/// Compute mode. Each mode includes every feature of the previous one, so
/// the set is totally ordered:
///
/// * [`Mode::Dense`] — all keys, all planes, no pruning; fetches stream
///   ahead of compute because nothing depends on a decision.
/// * [`Mode::BitSerial`] — guarded filtering prunes keys early, but each
///   lane blocks on every plane fetch and walks set bits one per cycle.
/// * [`Mode::BitSparse`] — adds the grouped select-and-accumulate datapath:
///   one plane per cycle in steady state, still in order.
/// * [`Mode::OutOfOrder`] — lanes switch to any ready key while fetches are
///   in flight, bounded by the scoreboard capacity.
/// * [`Mode::Tiled`] — retained keys flush to tiles consumed by the value
///   unit while filtering continues, with reuse-aware value fetches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dense,
    BitSerial,
    BitSparse,
    OutOfOrder,
    Tiled,
}

impl Mode {
    pub fn prunes(self) -> bool {
        self != Mode::Dense
    }

    pub fn out_of_order(self) -> bool {
        matches!(self, Mode::OutOfOrder | Mode::Tiled)
    }

    pub fn tiled(self) -> bool {
        self == Mode::Tiled
    }
}

/// DRAM layout of the key tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Plane-major: all keys' bits of one plane are contiguous, so
    /// plane-granular fetches walk open rows.
    BitInterleaved,
    /// Key-major: a key's planes are contiguous, so plane-granular fetches
    /// hop across rows.
    RowMajor,
}

/// Energy constants; energy is an exact weighted sum of event counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub dram_pj_per_bit: f64,
    pub sram_pj_per_access: f64,
    pub pe_pj_per_cycle: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            dram_pj_per_bit: 4.0,
            sram_pj_per_access: 0.1,
            pe_pj_per_cycle: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    pub layout: Layout,
    /// Bit-wise PE lanes per row; one row processes one query.
    pub lanes_per_row: usize,
    pub rows: usize,
    /// In-flight keys a lane may hold (out-of-order modes).
    pub scoreboard_capacity: usize,
    /// Select-and-accumulate sub-group width.
    pub group_size: usize,
    pub dram_latency_cycles: u64,
    /// Extra cycles when an access opens a new DRAM row.
    pub activation_penalty_cycles: u64,
    pub max_outstanding_requests: usize,
    /// Channels serving key-plane fetches; values use a dedicated channel.
    pub channels: usize,
    pub bytes_per_transaction: usize,
    pub dram_row_bytes: usize,
    pub banks: usize,
    /// Retained keys per tile handed to the value unit.
    pub tile_size: usize,
    pub tile_order: TileOrder,
    /// V vectors one systolic row consumes per scheduling round.
    pub vpu_row_capacity: usize,
    pub energy: EnergyModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: Mode::Tiled,
            layout: Layout::BitInterleaved,
            lanes_per_row: 16,
            rows: 8,
            scoreboard_capacity: 32,
            group_size: 8,
            dram_latency_cycles: 40,
            activation_penalty_cycles: 20,
            max_outstanding_requests: 8,
            channels: 2,
            bytes_per_transaction: 32,
            dram_row_bytes: 512,
            banks: 8,
            tile_size: 16,
            tile_order: TileOrder::LeftToRight,
            vpu_row_capacity: 2,
            energy: EnergyModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: usize) -> Result<()> {
            if v == 0 {
                Err(Error::invalid_config(field, "must be positive"))
            } else {
                Ok(())
            }
        }
        positive("sim.lanes_per_row", self.lanes_per_row)?;
        positive("sim.rows", self.rows)?;
        positive("sim.group_size", self.group_size)?;
        positive("sim.max_outstanding_requests", self.max_outstanding_requests)?;
        positive("sim.channels", self.channels)?;
        positive("sim.bytes_per_transaction", self.bytes_per_transaction)?;
        positive("sim.dram_row_bytes", self.dram_row_bytes)?;
        positive("sim.banks", self.banks)?;
        positive("sim.tile_size", self.tile_size)?;
        positive("sim.vpu_row_capacity", self.vpu_row_capacity)?;
        if self.dram_latency_cycles == 0 {
            return Err(Error::invalid_config("sim.dram_latency_cycles", "must be positive"));
        }
        if self.mode.out_of_order() && self.scoreboard_capacity == 0 {
            return Err(Error::invalid_config(
                "sim.scoreboard_capacity",
                "out-of-order modes require a non-empty scoreboard",
            ));
        }
        if !self.mode.out_of_order() && self.scoreboard_capacity == 0 {
            return Err(Error::invalid_config("sim.scoreboard_capacity", "must be positive"));
        }
        let e = &self.energy;
        if !(e.dram_pj_per_bit >= 0.0 && e.sram_pj_per_access >= 0.0 && e.pe_pj_per_cycle >= 0.0) {
            return Err(Error::invalid_config("sim.energy", "constants must be non-negative"));
        }
        Ok(())
    }
}
