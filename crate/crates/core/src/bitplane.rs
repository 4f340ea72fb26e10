//! Symmetric INT8 quantization, two's-complement bit-plane decomposition,
//! conservative partial scores, and uncertainty intervals.
//!
//! A p-bit two's-complement integer `b_{p-1} b_{p-2} .. b_0` has value
//! `-b_{p-1} * 2^(p-1) + sum_i b_i * 2^i`: every bit below the sign bit only
//! adds a non-negative amount. Plane `r` of a key vector collects bit
//! `p-1-r` of every element, so plane 0 is the sign plane and later planes
//! carry strictly positive weights. That one-sided structure is what makes
//! score speculation from a plane prefix sound: zeroing the unseen bits gives
//! a conservative partial score, and the query alone bounds how much the
//! unseen bits can move it.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Integer matrix with a shared dequantization scale.
///
/// `values` is row-major, `rows x dim`, every value representable in
/// `bits`-bit two's complement. `dequantize(v) = v * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMatrix {
    pub values: Vec<i8>,
    pub rows: usize,
    pub dim: usize,
    pub scale: f64,
    pub bits: u32,
}

impl QuantizedMatrix {
    pub fn row(&self, i: usize) -> &[i8] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Dequantized copy of row `i`.
    pub fn dequantize_row(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64 * self.scale).collect()
    }
}

/// Largest representable magnitude for `bits`-bit two's complement: 2^(bits-1) - 1.
fn int_max(bits: u32) -> i32 {
    (1 << (bits - 1)) - 1
}

fn int_min(bits: u32) -> i32 {
    -(1 << (bits - 1))
}

/// Symmetric per-tensor quantization with round-half-away-from-zero.
///
/// `scale = max_abs / (2^(bits-1) - 1)`, so zero maps to zero and the
/// extremes saturate at the symmetric grid edge. An all-zero input gets
/// `scale = 1` as a documented degenerate choice. Non-finite entries are
/// rejected.
pub fn quantize(data: &[f64], rows: usize, dim: usize, bits: u32) -> Result<QuantizedMatrix> {
    if bits != 4 && bits != 8 {
        return Err(Error::UnsupportedBits { bits });
    }
    if data.len() != rows * dim {
        return Err(Error::dimension_mismatch(format!(
            "expected {rows}x{dim} = {} entries, got {}",
            rows * dim,
            data.len()
        )));
    }
    let mut max_abs = 0.0f64;
    for (idx, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: idx / dim,
                col: idx % dim,
            });
        }
        max_abs = max_abs.max(v.abs());
    }
    let scale = if max_abs == 0.0 {
        1.0
    } else {
        max_abs / int_max(bits) as f64
    };
    let lo = int_min(bits);
    let hi = int_max(bits);
    let values = data
        .iter()
        // f64::round is round-half-away-from-zero, the convention used here.
        .map(|&v| ((v / scale).round() as i32).clamp(lo, hi) as i8)
        .collect();
    Ok(QuantizedMatrix {
        values,
        rows,
        dim,
        scale,
        bits,
    })
}

/// MSB-first 1-bit planes of one key vector.
///
/// Plane `r` stores bit `p-1-r` of every element as a packed bitmask
/// (`dim` bits, little-endian within each `u64` word). Plane 0 carries
/// weight `-2^(p-1)`; plane `r >= 1` carries `+2^(p-1-r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitPlanes {
    pub key_index: usize,
    pub planes: Vec<Vec<u64>>,
    pub dim: usize,
    pub bits: u32,
}

impl BitPlanes {
    pub fn words_per_plane(dim: usize) -> usize {
        dim.div_ceil(64)
    }

    /// Signed weight of plane `r` in a `bits`-bit decomposition.
    pub fn plane_weight(bits: u32, r: u32) -> i64 {
        if r == 0 {
            -(1i64 << (bits - 1))
        } else {
            1i64 << (bits - 1 - r)
        }
    }

    pub fn bit(&self, r: usize, j: usize) -> bool {
        (self.planes[r][j / 64] >> (j % 64)) & 1 == 1
    }

    /// Number of set bits in plane `r`.
    pub fn popcount(&self, r: usize) -> u32 {
        self.planes[r].iter().map(|w| w.count_ones()).sum()
    }
}

/// Decompose one quantized row into MSB-first bit planes.
pub fn decompose(row: &[i8], key_index: usize, bits: u32) -> BitPlanes {
    let dim = row.len();
    let words = BitPlanes::words_per_plane(dim);
    let mut planes = vec![vec![0u64; words]; bits as usize];
    for (j, &v) in row.iter().enumerate() {
        // Two's-complement bit pattern of the p-bit value.
        let pattern = (v as i32) & ((1i32 << bits) - 1);
        for r in 0..bits {
            let bit_pos = bits - 1 - r; // plane r holds bit p-1-r
            if (pattern >> bit_pos) & 1 == 1 {
                planes[r as usize][j / 64] |= 1u64 << (j % 64);
            }
        }
    }
    BitPlanes {
        key_index,
        planes,
        dim,
        bits,
    }
}

/// Reassemble the integer vector from all planes. Inverse of [`decompose`].
pub fn recompose(planes: &BitPlanes) -> Vec<i8> {
    let mut out = vec![0i64; planes.dim];
    for r in 0..planes.bits {
        let w = BitPlanes::plane_weight(planes.bits, r);
        for (j, v) in out.iter_mut().enumerate() {
            if planes.bit(r as usize, j) {
                *v += w;
            }
        }
    }
    out.into_iter().map(|v| v as i8).collect()
}

/// Unweighted bit dot product `sum_j q_j * plane_bit_j` for one plane.
pub fn plane_bit_sum(q_row: &[i8], planes: &BitPlanes, r: usize) -> i64 {
    let mut sum = 0i64;
    for (w_idx, &word) in planes.planes[r].iter().enumerate() {
        let mut word = word;
        while word != 0 {
            let j = w_idx * 64 + word.trailing_zeros() as usize;
            sum += q_row[j] as i64;
            word &= word - 1;
        }
    }
    sum
}

/// Conservative partial score from planes `0..=r`: unseen bits of the key are
/// treated as zero. At `r = p-1` this equals the exact integer dot product.
pub fn partial_score(q_row: &[i8], planes: &BitPlanes, r: usize) -> i64 {
    assert!(r < planes.bits as usize, "round {r} out of range");
    let mut score = 0i64;
    for round in 0..=r {
        score += BitPlanes::plane_weight(planes.bits, round as u32) * plane_bit_sum(q_row, planes, round);
    }
    score
}

/// Exact integer dot product of two quantized rows.
pub fn exact_score(q_row: &[i8], k_row: &[i8]) -> i64 {
    q_row
        .iter()
        .zip(k_row)
        .map(|(&q, &k)| q as i64 * k as i64)
        .sum()
}

/// Per-round bounds on the unseen-plane contribution, computable from the
/// query alone.
///
/// After planes `0..=r`, each key element still hides bits worth at most
/// `W_r = 2^(p-1-r) - 1`, all non-negative. So the unseen contribution lies
/// in `[W_r * sum(q_j < 0), W_r * sum(q_j > 0)]`. The interval collapses to
/// `(0, 0)` at the last round.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTable {
    /// `pairs[row][r] = (I_min, I_max)` with `I_min <= 0 <= I_max`.
    pub pairs: Vec<Vec<(i64, i64)>>,
    pub bits: u32,
}

impl UncertaintyTable {
    pub fn row(&self, i: usize) -> &[(i64, i64)] {
        &self.pairs[i]
    }
}

/// Bounds for one query row; index `r` gives the interval after planes `0..=r`.
pub fn uncertainty_row(q_row: &[i8], bits: u32) -> Vec<(i64, i64)> {
    let pos: i64 = q_row.iter().filter(|&&q| q > 0).map(|&q| q as i64).sum();
    let neg: i64 = q_row.iter().filter(|&&q| q < 0).map(|&q| q as i64).sum();
    (0..bits)
        .map(|r| {
            let unseen = (1i64 << (bits - 1 - r)) - 1;
            (unseen * neg, unseen * pos)
        })
        .collect()
}

/// Build the full table for a quantized query matrix.
pub fn build_uncertainty_table(q: &QuantizedMatrix) -> UncertaintyTable {
    UncertaintyTable {
        pairs: (0..q.rows).map(|i| uncertainty_row(q.row(i), q.bits)).collect(),
        bits: q.bits,
    }
}

/// Group-wise scale factors for micro-scaled operands: one `(dq, dk)` pair
/// per contiguous group plus a shared output scale `da`.
#[derive(Debug, Clone)]
pub struct GroupScales {
    pub group_size: usize,
    pub dq: Vec<f64>,
    pub dk: Vec<f64>,
    pub da: f64,
}

/// Uncertainty intervals for a query row quantized group-wise.
///
/// Each group of `group_size` elements gets its own interval (as in
/// [`uncertainty_row`]), scaled by `dq_g * dk_g / da`, then the per-group
/// intervals are summed endpoint-wise. With one group and unit scales this
/// reduces to [`uncertainty_row`].
pub fn group_scaled_uncertainty_row(
    q_row: &[i8],
    bits: u32,
    scales: &GroupScales,
) -> Result<Vec<(f64, f64)>> {
    let g = scales.group_size;
    if g == 0 || q_row.len() % g != 0 {
        return Err(Error::dimension_mismatch(format!(
            "row length {} not divisible by group size {g}",
            q_row.len()
        )));
    }
    let groups = q_row.len() / g;
    if scales.dq.len() != groups || scales.dk.len() != groups {
        return Err(Error::dimension_mismatch(format!(
            "expected {groups} group scales, got {} / {}",
            scales.dq.len(),
            scales.dk.len()
        )));
    }
    if scales.da <= 0.0 || scales.dq.iter().chain(&scales.dk).any(|&s| s <= 0.0) {
        return Err(Error::invalid_config(
            "group_scales",
            "scale factors must be positive",
        ));
    }
    let mut agg = vec![(0.0f64, 0.0f64); bits as usize];
    for gi in 0..groups {
        let factor = scales.dq[gi] * scales.dk[gi] / scales.da;
        let local = uncertainty_row(&q_row[gi * g..(gi + 1) * g], bits);
        for (r, &(lo, hi)) in local.iter().enumerate() {
            agg[r].0 += factor * lo as f64;
            agg[r].1 += factor * hi as f64;
        }
    }
    Ok(agg)
}
