//! The cycle engine: lane state machines, channelized memory with request
//! merging and an on-chip presence set, the staggered value unit, and the
//! cumulative-feature ablation driver.
//!
//! Timing is trace-driven: the canonical filter decides per key how many
//! planes are fetched and whether the key survives, and the engine replays
//! those events under the configured schedule. In-order lanes block on every
//! fetch; out-of-order lanes park in-flight keys on a scoreboard and compute
//! whichever requested plane arrived first. A `(key, plane)` fetched by one
//! row is visible to all rows for the rest of the pass, and concurrent
//! requests for it merge into one transaction.

use super::config::{Layout, Mode, SimConfig};
use super::dram::{BankState, DramGeometry};
use super::metrics::SimMetrics;
use super::trace::{Action, TraceEvent};
use crate::bitplane::{decompose, exact_score, plane_bit_sum, uncertainty_row, BitPlanes};
use crate::bitsparsity::pipeline_fill_cycles;
use crate::error::{Error, Result};
use crate::filter::{filter_row, KeyOutcome, PruneConfig, PruneTrace, Scoreboard, ScoreboardEntry};
use crate::reference::Matrix;
use crate::schedule::{schedule_naive, schedule_reuse_aware, UsagePattern};
use crate::tiling::{attend_retained, TileOrder};
use crate::workload::Workload;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Hard per-pass cycle budget; a deterministic run exceeding it is a bug.
const CYCLE_LIMIT: u64 = 200_000_000;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: SimMetrics,
    /// Attention outputs, one row per query; bit-identical to the functional
    /// tiled path over the same retained sets.
    pub outputs: Matrix,
    pub traces: Vec<PruneTrace>,
    pub retained: Vec<Vec<(usize, i64)>>,
    /// Populated by [`run_with_trace`] only.
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FetchState {
    Pending,
    Present,
}

#[derive(Debug, Clone, Copy)]
struct Request {
    key: usize,
    plane: u32,
    /// Dense prefetch pulls whole keys in one request.
    whole_key: bool,
    requester: usize,
}

#[derive(Debug, Default)]
struct Channel {
    queue: VecDeque<Request>,
    inflight: Vec<(u64, Request)>,
}

/// Per-pass memory state: fetch status per `(key, plane)`, channel queues,
/// and open-row tracking.
struct MemorySystem {
    geom: DramGeometry,
    layout: Layout,
    channels: Vec<Channel>,
    state: BTreeMap<(usize, u32), FetchState>,
    banks: BankState,
    bits_fetched: u64,
    transactions: u64,
}

impl MemorySystem {
    fn new(geom: DramGeometry, layout: Layout, channels: usize) -> MemorySystem {
        MemorySystem {
            geom,
            layout,
            channels: (0..channels).map(|_| Channel::default()).collect(),
            state: BTreeMap::new(),
            banks: BankState::new(geom.banks),
            bits_fetched: 0,
            transactions: 0,
        }
    }

    fn channel_of(&self, key: usize, plane: u32) -> usize {
        let addr = self.geom.address(self.layout, key, plane);
        let (bank, _) = self.geom.bank_and_row(addr);
        bank % self.channels.len()
    }

    fn present(&self, key: usize, plane: u32) -> bool {
        self.state.get(&(key, plane)) == Some(&FetchState::Present)
    }

    /// Issue or merge a fetch. Duplicate requests for an in-flight or
    /// on-chip plane are coalesced.
    fn request(&mut self, key: usize, plane: u32, whole_key: bool, requester: usize) {
        if self.state.contains_key(&(key, plane)) {
            return;
        }
        let planes: Vec<u32> = if whole_key {
            (0..self.geom.planes).collect()
        } else {
            vec![plane]
        };
        for p in planes {
            self.state.insert((key, p), FetchState::Pending);
        }
        let ch = self.channel_of(key, plane);
        self.channels[ch].queue.push_back(Request {
            key,
            plane,
            whole_key,
            requester,
        });
    }

    /// Complete due requests at the start of a cycle.
    fn complete(&mut self, cycle: u64, events: &mut Option<Vec<TraceEvent>>) {
        for ch in &mut self.channels {
            let mut done_reqs = Vec::new();
            ch.inflight.retain(|&(done, req)| {
                if done <= cycle {
                    done_reqs.push(req);
                    false
                } else {
                    true
                }
            });
            for req in done_reqs {
                let planes: Vec<u32> = if req.whole_key {
                    (0..self.geom.planes).collect()
                } else {
                    vec![req.plane]
                };
                for p in planes {
                    self.state.insert((req.key, p), FetchState::Present);
                }
                if let Some(events) = events {
                    events.push(TraceEvent {
                        cycle,
                        lane: req.requester,
                        key: req.key,
                        plane: req.plane,
                        action: Action::FetchDone,
                    });
                }
            }
        }
    }

    /// Issue at most one queued request per channel at the end of a cycle.
    fn issue(&mut self, cycle: u64) {
        let max_outstanding = self.geom.max_outstanding;
        for ch in 0..self.channels.len() {
            if self.channels[ch].inflight.len() >= max_outstanding {
                continue;
            }
            let Some(req) = self.channels[ch].queue.pop_front() else {
                continue;
            };
            let addr = self.geom.address(self.layout, req.key, req.plane);
            let activated = self.banks.access(&self.geom, addr);
            let bytes = if req.whole_key {
                self.geom.plane_bytes * self.geom.planes as usize
            } else {
                self.geom.plane_bytes
            };
            let service = self.geom.latency_cycles
                + if activated { self.geom.activation_penalty_cycles } else { 0 };
            self.bits_fetched += bytes as u64 * 8;
            self.transactions += bytes.div_ceil(self.geom.bytes_per_transaction).max(1) as u64;
            self.channels[ch].inflight.push((cycle + service, req));
        }
    }

    fn idle(&self) -> bool {
        self.channels.iter().all(|c| c.queue.is_empty() && c.inflight.is_empty())
    }
}

#[derive(Debug, Clone, Copy)]
struct KeyPlan {
    key: usize,
    planes: u32,
    retained: bool,
}

#[derive(Debug, Clone, Copy)]
struct ActiveKey {
    plan: KeyPlan,
    next_plane: u32,
    issue_seq: u64,
}

struct Lane {
    global_id: usize,
    /// Index of the query row this lane serves.
    query_row: usize,
    queue: VecDeque<KeyPlan>,
    active: Vec<ActiveKey>,
    capacity: usize,
    scoreboard: Scoreboard,
    computing: Option<(KeyPlan, u32, u64)>, // plan, plane, remaining cycles
    fill_paid: bool,
    busy: u64,
    memory_stall: u64,
    inter_pe_stall: u64,
}

enum LaneEvent {
    None,
    Retired { plan: KeyPlan, last_plane: u32 },
}

impl Lane {
    fn done(&self) -> bool {
        self.queue.is_empty() && self.active.is_empty() && self.computing.is_none()
    }
}

struct VTile {
    ready: u64,
    remaining: usize,
}

/// Run the workload through the cycle model.
pub fn run(workload: &Workload, sim: &SimConfig, prune: &PruneConfig) -> Result<RunOutput> {
    run_inner(workload, sim, prune, false)
}

/// Like [`run`], additionally recording the event trace.
pub fn run_with_trace(
    workload: &Workload,
    sim: &SimConfig,
    prune: &PruneConfig,
) -> Result<RunOutput> {
    run_inner(workload, sim, prune, true)
}

fn run_inner(
    workload: &Workload,
    sim: &SimConfig,
    prune: &PruneConfig,
    record: bool,
) -> Result<RunOutput> {
    sim.validate()?;
    prune.validate()?;
    let w = workload;
    if w.k_int.rows != w.v_int.rows {
        return Err(Error::dimension_mismatch(format!(
            "{} keys vs {} value rows",
            w.k_int.rows, w.v_int.rows
        )));
    }
    if w.k_int.bits != prune.bits {
        return Err(Error::invalid_config(
            "prune.bits",
            format!("operands are {}-bit but prune.bits is {}", w.k_int.bits, prune.bits),
        ));
    }
    let queries = w.q_int.rows;
    let seq_len = w.k_int.rows;
    let dim = w.k_int.dim;
    let bits = prune.bits;

    let planes_all: Vec<BitPlanes> = (0..seq_len)
        .map(|j| decompose(w.k_int.row(j), j, bits))
        .collect();

    // Canonical functional decisions per query row.
    let mut traces: Vec<PruneTrace> = Vec::with_capacity(queries);
    for qi in 0..queries {
        let trace = if sim.mode.prunes() {
            let intervals = uncertainty_row(w.q_int.row(qi), bits);
            filter_row(w.q_int.row(qi), &planes_all, &intervals, prune)
        } else {
            dense_trace(w.q_int.row(qi), &w.k_int.values, seq_len, dim, bits)
        };
        traces.push(trace);
    }

    // Per-(key, plane) compute cost under the mode's datapath.
    let grouped_tree = matches!(sim.mode, Mode::BitSparse | Mode::OutOfOrder | Mode::Tiled);
    let popcounts: Vec<Vec<u64>> = planes_all
        .iter()
        .map(|p| (0..bits as usize).map(|r| p.popcount(r) as u64).collect())
        .collect();
    let cost = move |key: usize, plane: u32| -> u64 {
        if grouped_tree {
            1
        } else {
            popcounts[key][plane as usize].max(1)
        }
    };
    let fill = if grouped_tree { pipeline_fill_cycles(sim.group_size) } else { 0 };

    let mut metrics = SimMetrics {
        busy_cycles: vec![0; queries.max(sim.rows) * sim.lanes_per_row],
        ..SimMetrics::default()
    };
    let mut events: Option<Vec<TraceEvent>> = if record { Some(Vec::new()) } else { None };
    let mut engaged_lane_cycles = 0u64;

    let passes = queries.div_ceil(sim.rows);
    for pass in 0..passes {
        let rows_active = sim.rows.min(queries - pass * sim.rows);
        let pass_cycles = simulate_pass(
            w,
            sim,
            &traces[pass * sim.rows..pass * sim.rows + rows_active],
            &planes_all,
            &cost,
            fill,
            pass * sim.rows,
            &mut metrics,
            &mut events,
        )?;
        engaged_lane_cycles += rows_active as u64 * sim.lanes_per_row as u64 * pass_cycles;
        metrics.total_cycles += pass_cycles;
    }

    // Functional value path: outputs and rescale accounting. Non-tiled modes
    // hand the value unit the whole retained set at once.
    let mut outputs = vec![0.0f64; queries * dim];
    let mut retained_sets = Vec::with_capacity(queries);
    for (qi, trace) in traces.iter().enumerate() {
        let retained = trace.retained();
        let (tile_size, order) = if sim.mode.tiled() {
            (sim.tile_size, sim.tile_order)
        } else {
            (retained.len().max(1), TileOrder::LeftToRight)
        };
        let (out, rescales, _) =
            attend_retained(&retained, &w.v_int, prune.score_scale, tile_size, order);
        outputs[qi * dim..(qi + 1) * dim].copy_from_slice(&out);
        metrics.rescale_ops += rescales;
        metrics.retained_keys += retained.len() as u64;
        retained_sets.push(retained);
    }

    metrics.planes_computed = traces.iter().map(PruneTrace::total_planes_fetched).sum();
    metrics.utilization = if engaged_lane_cycles == 0 {
        0.0
    } else {
        metrics.total_busy() as f64 / engaged_lane_cycles as f64
    };
    metrics.energy_pj = metrics.energy_from_counters(&sim.energy);

    Ok(RunOutput {
        metrics,
        outputs: Matrix::new(outputs, queries, dim),
        traces,
        retained: retained_sets,
        events: events.unwrap_or_default(),
    })
}

/// All-retained trace for dense mode: every key fetches every plane.
fn dense_trace(q_row: &[i8], k_values: &[i8], seq_len: usize, dim: usize, bits: u32) -> PruneTrace {
    let outcomes: Vec<KeyOutcome> = (0..seq_len)
        .map(|j| KeyOutcome::Retained {
            score: exact_score(q_row, &k_values[j * dim..(j + 1) * dim]),
        })
        .collect();
    PruneTrace {
        outcomes,
        planes_fetched: vec![bits; seq_len],
        final_threshold: f64::NEG_INFINITY,
        threshold_history: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_pass(
    w: &Workload,
    sim: &SimConfig,
    traces: &[PruneTrace],
    planes_all: &[BitPlanes],
    cost: &dyn Fn(usize, u32) -> u64,
    fill: u64,
    row_base: usize,
    metrics: &mut SimMetrics,
    events: &mut Option<Vec<TraceEvent>>,
) -> Result<u64> {
    let rows_active = traces.len();
    let lanes_per_row = sim.lanes_per_row;
    let seq_len = w.k_int.rows;
    let dim = w.k_int.dim;
    let geom = DramGeometry::from_config(sim, seq_len, dim, w.k_int.bits);
    let mut mem = MemorySystem::new(geom, sim.layout, sim.channels);

    // Query rows land once per pass; count the traffic, keep the timing out
    // of the critical loop.
    mem.bits_fetched += (rows_active * dim) as u64 * w.q_int.bits as u64;
    mem.transactions += rows_active as u64 * dim.div_ceil(sim.bytes_per_transaction).max(1) as u64;

    // Key j of every row belongs to lane j % lanes_per_row.
    let mut lanes: Vec<Lane> = Vec::with_capacity(rows_active * lanes_per_row);
    for row in 0..rows_active {
        for lane in 0..lanes_per_row {
            let mut queue = VecDeque::new();
            for key in (lane..seq_len).step_by(lanes_per_row) {
                queue.push_back(KeyPlan {
                    key,
                    planes: traces[row].planes_fetched[key],
                    retained: traces[row].outcomes[key].is_retained(),
                });
            }
            let capacity = if sim.mode.out_of_order() {
                sim.scoreboard_capacity
            } else {
                1
            };
            lanes.push(Lane {
                global_id: (row_base + row) * lanes_per_row + lane,
                query_row: row_base + row,
                queue,
                active: Vec::new(),
                capacity,
                scoreboard: Scoreboard::new(capacity),
                computing: None,
                fill_paid: false,
                busy: 0,
                memory_stall: 0,
                inter_pe_stall: 0,
            });
        }
    }

    // Dense mode prefetches whole keys. Pruning modes still prefetch every
    // sign plane: plane 0 of every key is needed unconditionally, so those
    // fetches depend on no decision even in strict in-order execution.
    for key in 0..seq_len {
        let requester = row_base * lanes_per_row + key % lanes_per_row;
        mem.request(key, 0, !sim.mode.prunes(), requester);
        if let Some(events) = events {
            events.push(TraceEvent {
                cycle: 0,
                lane: requester,
                key,
                plane: 0,
                action: Action::FetchReq,
            });
        }
    }

    // Value unit: one tile FIFO per active row, one consumed pair per cycle.
    let mut vpu: Vec<VecDeque<VTile>> = (0..rows_active).map(|_| VecDeque::new()).collect();
    let mut board: Vec<usize> = vec![0; rows_active];
    let mut resolved: Vec<usize> = vec![0; rows_active];
    let mut tiles_made: Vec<usize> = vec![0; rows_active];
    let mut seq_counter = 0u64;

    let mut cycle = 0u64;
    loop {
        let lanes_done = lanes.iter().all(Lane::done);
        let vpu_done = vpu.iter().all(VecDeque::is_empty);
        if lanes_done && vpu_done && mem.idle() {
            break;
        }
        if cycle > CYCLE_LIMIT {
            return Err(Error::Internal(format!(
                "cycle budget exceeded in pass simulation (mode {:?})",
                sim.mode
            )));
        }

        mem.complete(cycle, events);

        for row_tiles in vpu.iter_mut() {
            if let Some(front) = row_tiles.front_mut() {
                if front.ready <= cycle {
                    front.remaining -= 1;
                    metrics.vpu_busy_cycles += 1;
                    metrics.sram_accesses += 1;
                    if front.remaining == 0 {
                        row_tiles.pop_front();
                    }
                }
            }
        }

        for lane_idx in 0..lanes.len() {
            let row = lane_idx / lanes_per_row;
            let event = step_lane(
                &mut lanes[lane_idx],
                w,
                planes_all,
                &mut mem,
                cost,
                fill,
                cycle,
                &mut seq_counter,
                metrics,
                events,
            );
            if let LaneEvent::Retired { plan, last_plane } = event {
                resolved[row] += 1;
                let action = if plan.retained { Action::Retain } else { Action::Prune };
                if let Some(events) = events {
                    events.push(TraceEvent {
                        cycle,
                        lane: lanes[lane_idx].global_id,
                        key: plan.key,
                        plane: last_plane,
                        action,
                    });
                }
                if plan.retained {
                    board[row] += 1;
                }
                let tile_cap = if sim.mode.tiled() { sim.tile_size } else { usize::MAX };
                let all_resolved = resolved[row] == seq_len;
                while board[row] >= tile_cap || (all_resolved && board[row] > 0) {
                    let len = board[row].min(tile_cap);
                    board[row] -= len;
                    vpu[row].push_back(VTile {
                        ready: cycle + sim.dram_latency_cycles,
                        remaining: len,
                    });
                    if let Some(events) = events {
                        events.push(TraceEvent {
                            cycle,
                            lane: row_base + row,
                            key: tiles_made[row],
                            plane: len as u32,
                            action: Action::TileFlush,
                        });
                    }
                    tiles_made[row] += 1;
                }
            }
        }

        mem.issue(cycle);
        cycle += 1;
    }

    // Value-vector memory accounting: the reuse-aware schedule drives tiled
    // runs; everything else fetches left to right.
    let needs: Vec<BTreeSet<usize>> = traces
        .iter()
        .map(|t| t.retained().iter().map(|&(k, _)| k).collect::<BTreeSet<usize>>())
        .filter(|s| !s.is_empty())
        .collect();
    if !needs.is_empty() {
        let pattern = UsagePattern::new(needs, sim.vpu_row_capacity)?;
        let schedule = if sim.mode.tiled() {
            schedule_reuse_aware(&pattern)
        } else {
            schedule_naive(&pattern)
        };
        mem.transactions += schedule.total_fetches as u64
            * dim.div_ceil(sim.bytes_per_transaction).max(1) as u64;
        mem.bits_fetched += schedule.total_fetches as u64 * (dim * 8) as u64;
    }

    metrics.bits_fetched += mem.bits_fetched;
    metrics.dram_transactions += mem.transactions;
    metrics.row_activations += mem.banks.activations;
    for lane in &lanes {
        metrics.busy_cycles[lane.global_id] += lane.busy;
        metrics.memory_stall_cycles += lane.memory_stall;
        metrics.inter_pe_stall_cycles += lane.inter_pe_stall;
        metrics.scoreboard_peak_occupancy =
            metrics.scoreboard_peak_occupancy.max(lane.scoreboard.peak_occupancy());
    }
    Ok(cycle)
}

#[allow(clippy::too_many_arguments)]
fn step_lane(
    lane: &mut Lane,
    w: &Workload,
    planes_all: &[BitPlanes],
    mem: &mut MemorySystem,
    cost: &dyn Fn(usize, u32) -> u64,
    fill: u64,
    cycle: u64,
    seq_counter: &mut u64,
    metrics: &mut SimMetrics,
    events: &mut Option<Vec<TraceEvent>>,
) -> LaneEvent {
    // Continue a multi-cycle compute.
    if let Some((plan, plane, remaining)) = lane.computing {
        lane.busy += 1;
        if remaining > 1 {
            lane.computing = Some((plan, plane, remaining - 1));
            return LaneEvent::None;
        }
        lane.computing = None;
        return finish_plane(lane, w, planes_all, mem, cycle, seq_counter, metrics, events, plan, plane);
    }

    // Start the oldest requested plane that has arrived.
    let mut ready: Option<(u64, usize)> = None;
    for (i, a) in lane.active.iter().enumerate() {
        if mem.present(a.plan.key, a.next_plane) {
            let candidate = (a.issue_seq, i);
            ready = Some(match ready {
                Some(best) if best.0 <= candidate.0 => best,
                _ => candidate,
            });
        }
    }
    if let Some((_, idx)) = ready {
        let a = lane.active[idx];
        let plane = a.next_plane;
        let mut c = cost(a.plan.key, plane);
        metrics.intra_pe_stall_cycles += c - 1;
        if !lane.fill_paid && fill > 0 {
            c += fill;
            lane.fill_paid = true;
        }
        if let Some(events) = events {
            events.push(TraceEvent {
                cycle,
                lane: lane.global_id,
                key: a.plan.key,
                plane,
                action: Action::Compute,
            });
        }
        lane.busy += 1;
        if c > 1 {
            lane.computing = Some((a.plan, plane, c - 1));
            return LaneEvent::None;
        }
        return finish_plane(lane, w, planes_all, mem, cycle, seq_counter, metrics, events, a.plan, plane);
    }

    // Admit one key per cycle while the scoreboard has room.
    if lane.active.len() < lane.capacity {
        if let Some(plan) = lane.queue.pop_front() {
            mem.request(plan.key, 0, false, lane.global_id);
            if let Some(events) = events {
                events.push(TraceEvent {
                    cycle,
                    lane: lane.global_id,
                    key: plan.key,
                    plane: 0,
                    action: Action::FetchReq,
                });
            }
            lane.active.push(ActiveKey {
                plan,
                next_plane: 0,
                issue_seq: *seq_counter,
            });
            *seq_counter += 1;
            lane.memory_stall += 1;
            return LaneEvent::None;
        }
    }

    if lane.active.is_empty() && lane.queue.is_empty() {
        lane.inter_pe_stall += 1;
    } else {
        lane.memory_stall += 1;
    }
    LaneEvent::None
}

#[allow(clippy::too_many_arguments)]
fn finish_plane(
    lane: &mut Lane,
    w: &Workload,
    planes_all: &[BitPlanes],
    mem: &mut MemorySystem,
    cycle: u64,
    seq_counter: &mut u64,
    metrics: &mut SimMetrics,
    events: &mut Option<Vec<TraceEvent>>,
    plan: KeyPlan,
    plane: u32,
) -> LaneEvent {
    // Plane read from the key buffer, plus a scoreboard hit on later rounds.
    metrics.sram_accesses += 1;
    let q_row = w.q_int.row(lane.query_row);
    let delta = BitPlanes::plane_weight(w.q_int.bits, plane)
        * plane_bit_sum(q_row, &planes_all[plan.key], plane as usize);
    if plane == 0 {
        lane.scoreboard
            .insert(plan.key, ScoreboardEntry { partial_score: delta, rounds_done: 1 });
    } else {
        lane.scoreboard.update(plan.key, delta);
        metrics.sram_accesses += 1;
    }

    let idx = lane
        .active
        .iter()
        .position(|a| a.plan.key == plan.key)
        .expect("finished plane belongs to an active key");
    if plane + 1 < plan.planes {
        mem.request(plan.key, plane + 1, false, lane.global_id);
        if let Some(events) = events {
            events.push(TraceEvent {
                cycle,
                lane: lane.global_id,
                key: plan.key,
                plane: plane + 1,
                action: Action::FetchReq,
            });
        }
        lane.active[idx].next_plane = plane + 1;
        lane.active[idx].issue_seq = *seq_counter;
        *seq_counter += 1;
        LaneEvent::None
    } else {
        lane.active.remove(idx);
        lane.scoreboard.evict(plan.key);
        LaneEvent::Retired { plan, last_plane: plane }
    }
}

/// One cumulative ablation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: String,
    pub mode: Mode,
    pub metrics: SimMetrics,
}

/// Cumulative feature stack, in order.
pub const ABLATION_STAGES: [(&str, Mode); 4] = [
    ("dense", Mode::Dense),
    ("+guarded-filter", Mode::BitSerial),
    ("+sparsity-ooe", Mode::OutOfOrder),
    ("+tiling", Mode::Tiled),
];

/// Run the cumulative feature stack on a fixed workload.
pub fn ablate(workload: &Workload, base: &SimConfig, prune: &PruneConfig) -> Result<Vec<StageMetrics>> {
    let mut out = Vec::with_capacity(ABLATION_STAGES.len());
    for (label, mode) in ABLATION_STAGES {
        let cfg = SimConfig { mode, ..base.clone() };
        let result = run(workload, &cfg, prune)?;
        out.push(StageMetrics {
            stage: label.to_string(),
            mode,
            metrics: result.metrics,
        });
    }
    Ok(out)
}
