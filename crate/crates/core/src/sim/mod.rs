//! Deterministic cycle-level model of a lane-parallel bit-serial attention
//! accelerator.
//!
//! Functional behavior (which keys survive, their scores, the attention
//! outputs) is fixed by the canonical filter in [`crate::filter`] and the
//! tiled softmax in [`crate::tiling`]; the simulator replays those decisions
//! through a timing model — PE lanes with scoreboards, a channelized DRAM
//! with open-row tracking and request merging, and a value unit consuming
//! flushed tiles in a staggered pipeline. Out-of-order execution therefore
//! changes *when* planes are fetched and computed, never *what* is computed,
//! which keeps every mode bit-identical to the functional path and every run
//! deterministic.

mod config;
mod dram;
mod engine;
mod metrics;
mod trace;

pub use config::{EnergyModel, Layout, Mode, SimConfig};
pub use dram::{model_dram_access, DramGeometry, DramStats};
pub use engine::{ablate, run, run_with_trace, RunOutput, StageMetrics, ABLATION_STAGES};
pub use metrics::SimMetrics;
pub use trace::{to_jsonl, Action, TraceEvent};
