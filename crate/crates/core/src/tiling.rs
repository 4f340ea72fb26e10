//! Sparsity-tiled attention: retained-key collection, online-softmax
//! accumulation across tiles, head-tail interleaved tile ordering, and
//! rescale-operation counting.
//!
//! Keys that survive every bit round land on a retained board and flush to a
//! tile once `tile_size` of them accumulate (the final partial tile flushes
//! at the end). Tiles feed an online softmax: each tile may raise the
//! running max, and every raise rescales the accumulated sum and output by
//! `e^(m - m')` — one subtraction, one exponentiation, and two multiplies.
//! Visiting likely-maximal tiles first (head, then tail, then inward)
//! reduces those rescales on workloads with positional locality; the final
//! output is invariant to tile order.

use crate::bitplane::QuantizedMatrix;
use crate::error::{Error, Result};
use crate::filter::{filter_row, PruneConfig, PruneTrace};
use crate::bitplane::{decompose, uncertainty_row};
use serde::{Deserialize, Serialize};

/// Tile visitation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TileOrder {
    LeftToRight,
    HeadTail,
}

pub const DEFAULT_TILE_SIZE: usize = 16;

/// Head-tail interleaved visitation: `0, T-1, 1, T-2, 2, ...`, each tile
/// exactly once.
pub fn head_tail_order(num_tiles: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(num_tiles);
    let (mut lo, mut hi) = (0usize, num_tiles);
    while lo < hi {
        order.push(lo);
        lo += 1;
        if lo < hi {
            hi -= 1;
            order.push(hi);
        }
    }
    order
}

pub fn tile_order(num_tiles: usize, policy: TileOrder) -> Vec<usize> {
    match policy {
        TileOrder::LeftToRight => (0..num_tiles).collect(),
        TileOrder::HeadTail => head_tail_order(num_tiles),
    }
}

/// Online-softmax accumulator state for one query row.
#[derive(Debug, Clone)]
pub struct TileState {
    /// Running max in logit units.
    pub m: f64,
    /// Running exponential sum.
    pub l: f64,
    /// Output accumulator, length `d`.
    pub o: Vec<f64>,
    /// Rescale events beyond the first non-empty tile.
    pub rescale_ops: u64,
}

impl TileState {
    pub fn new(dim: usize) -> Self {
        TileState {
            m: f64::NEG_INFINITY,
            l: 0.0,
            o: vec![0.0; dim],
            rescale_ops: 0,
        }
    }

    /// Fold one tile of `(logit, value row)` pairs into the state. An empty
    /// tile is a no-op.
    pub fn accumulate(&mut self, scores: &[f64], value_rows: &[&[f64]]) {
        debug_assert_eq!(scores.len(), value_rows.len());
        if scores.is_empty() {
            return;
        }
        let tile_max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if tile_max > self.m {
            if self.l > 0.0 {
                // `e^(m - m')` rescale of both accumulators.
                let factor = (self.m - tile_max).exp();
                self.l *= factor;
                for o in &mut self.o {
                    *o *= factor;
                }
                self.rescale_ops += 1;
            }
            self.m = tile_max;
        }
        for (&s, v) in scores.iter().zip(value_rows) {
            let e = (s - self.m).exp();
            self.l += e;
            for (o, &x) in self.o.iter_mut().zip(*v) {
                *o += e * x;
            }
        }
    }

    /// Final normalized output `O / l`.
    pub fn finish(&self) -> Vec<f64> {
        self.o.iter().map(|&x| x / self.l).collect()
    }
}

/// Per-row result of the sparse attention pipeline.
#[derive(Debug, Clone)]
pub struct RowAttention {
    pub output: Vec<f64>,
    pub trace: PruneTrace,
    pub rescale_ops: u64,
    pub tiles: usize,
    pub retained: Vec<(usize, i64)>,
}

/// Tiled online softmax over an already-retained key set.
///
/// `retained` carries `(key index, exact integer score)`; scores are
/// dequantized once through `score_scale`. Returns the output vector, the
/// rescale count, and the tile count.
pub fn attend_retained(
    retained: &[(usize, i64)],
    values: &QuantizedMatrix,
    score_scale: f64,
    tile_size: usize,
    policy: TileOrder,
) -> (Vec<f64>, u64, usize) {
    assert!(tile_size > 0, "tile size must be positive");
    let dim = values.dim;
    if retained.is_empty() {
        return (vec![0.0; dim], 0, 0);
    }
    let tiles: Vec<&[(usize, i64)]> = retained.chunks(tile_size).collect();
    let order = tile_order(tiles.len(), policy);
    let mut state = TileState::new(dim);
    // Dequantize values per tile visit; rows are borrowed views of this buffer.
    for &t in &order {
        let tile = tiles[t];
        let scores: Vec<f64> = tile.iter().map(|&(_, s)| s as f64 * score_scale).collect();
        let rows: Vec<Vec<f64>> = tile.iter().map(|&(j, _)| values.dequantize_row(j)).collect();
        let row_refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        state.accumulate(&scores, &row_refs);
    }
    (state.finish(), state.rescale_ops, tiles.len())
}

/// Full sparse attention for one query row: guarded filtering over the key
/// stream, then tiled online softmax over the survivors.
pub fn attend_row(
    q_row: &[i8],
    keys: &QuantizedMatrix,
    values: &QuantizedMatrix,
    cfg: &PruneConfig,
    tile_size: usize,
    policy: TileOrder,
) -> Result<RowAttention> {
    if q_row.len() != keys.dim {
        return Err(Error::dimension_mismatch(format!(
            "query dim {} vs key dim {}",
            q_row.len(),
            keys.dim
        )));
    }
    if keys.rows != values.rows {
        return Err(Error::dimension_mismatch(format!(
            "{} keys vs {} value rows",
            keys.rows, values.rows
        )));
    }
    let planes: Vec<_> = (0..keys.rows)
        .map(|j| decompose(keys.row(j), j, cfg.bits))
        .collect();
    let intervals = uncertainty_row(q_row, cfg.bits);
    let trace = filter_row(q_row, &planes, &intervals, cfg);
    let retained = trace.retained();
    let (output, rescale_ops, tiles) =
        attend_retained(&retained, values, cfg.score_scale, tile_size, policy);
    Ok(RowAttention {
        output,
        trace,
        rescale_ops,
        tiles,
        retained,
    })
}

/// Rescale count predicted from a visited sequence of tile maxima: strict
/// prefix maxima beyond the first tile.
pub fn prefix_maxima_rescales(tile_maxima: &[f64]) -> u64 {
    let mut count = 0u64;
    let mut best = f64::NEG_INFINITY;
    for (i, &m) in tile_maxima.iter().enumerate() {
        if i > 0 && m > best {
            count += 1;
        }
        best = best.max(m);
    }
    count
}
