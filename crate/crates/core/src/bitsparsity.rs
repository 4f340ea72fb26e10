//! Bidirectional bit sparsity: per-group polarity selection, complement
//! evaluation via query sums, and lane cycle-cost models.
//!
//! A plane dot product `sum_j q_j * b_j` can be evaluated either over the
//! 1-bits directly or as `q_sum - sum over 0-bits`. Picking whichever side
//! has fewer effective positions caps per-group work at `ceil(g/2)` bits, so
//! load imbalance across lanes stays below 50% no matter how skewed the
//! plane is. Both routes are exact — sparsity selection never changes a
//! score.

use serde::{Deserialize, Serialize};

/// Which side of a group is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    /// Accumulate query entries at 1-bits.
    UseOnes,
    /// Subtract query entries at 0-bits from the group's query sum.
    UseZeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupInfo {
    pub polarity: Polarity,
    /// Positions (within the group) that participate in the evaluation,
    /// ascending. At most `ceil(g/2)` entries.
    pub effective: Vec<usize>,
    pub ones: usize,
    pub zeros: usize,
}

/// Per-group evaluation plan for one bit plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPlan {
    pub group_size: usize,
    pub groups: Vec<GroupInfo>,
    /// Plane width before zero-padding to a multiple of `group_size`.
    pub dim: usize,
}

impl GroupPlan {
    /// Total effective positions across the plane.
    pub fn effective_bits(&self) -> usize {
        self.groups.iter().map(|g| g.effective.len()).sum()
    }

    /// Set bits in the raw (unplanned) plane.
    pub fn raw_ones(&self) -> usize {
        self.groups.iter().map(|g| g.ones).sum()
    }
}

/// Per-group query sums for one query row, reused across all planes of all
/// keys until the query changes.
#[derive(Debug, Clone, PartialEq)]
pub struct QSums {
    pub group_size: usize,
    pub sums: Vec<i64>,
}

impl QSums {
    pub fn build(q_row: &[i8], group_size: usize) -> Self {
        let groups = q_row.len().div_ceil(group_size);
        let mut sums = vec![0i64; groups];
        for (j, &q) in q_row.iter().enumerate() {
            sums[j / group_size] += q as i64;
        }
        QSums { group_size, sums }
    }
}

/// Choose per-group polarity to minimize effective bits.
///
/// Planes whose length is not a multiple of `group_size` are padded with
/// zero bits; a tie between ones and zeros resolves to [`Polarity::UseOnes`].
pub fn plan_plane(plane_bits: &[bool], group_size: usize) -> GroupPlan {
    assert!(group_size > 0, "group size must be positive");
    let dim = plane_bits.len();
    let groups = dim.div_ceil(group_size);
    let mut infos = Vec::with_capacity(groups);
    for g in 0..groups {
        let start = g * group_size;
        let mut ones_pos = Vec::new();
        let mut zeros_pos = Vec::new();
        for offset in 0..group_size {
            let bit = plane_bits.get(start + offset).copied().unwrap_or(false);
            if bit {
                ones_pos.push(offset);
            } else {
                zeros_pos.push(offset);
            }
        }
        let (polarity, effective) = if ones_pos.len() <= zeros_pos.len() {
            (Polarity::UseOnes, ones_pos.clone())
        } else {
            (Polarity::UseZeros, zeros_pos.clone())
        };
        infos.push(GroupInfo {
            polarity,
            effective,
            ones: ones_pos.len(),
            zeros: zeros_pos.len(),
        });
    }
    GroupPlan {
        group_size,
        groups: infos,
        dim,
    }
}

/// Evaluate one group's plane dot product through the selected polarity.
///
/// `q_group` and `bit_group` must have equal lengths; `q_sum` is the group's
/// query sum. Both polarities compute exactly `sum_j q_j * bit_j`.
pub fn group_dot(q_group: &[i8], bit_group: &[bool], polarity: Polarity, q_sum: i64) -> i64 {
    debug_assert_eq!(q_group.len(), bit_group.len());
    match polarity {
        Polarity::UseOnes => q_group
            .iter()
            .zip(bit_group)
            .filter(|(_, &b)| b)
            .map(|(&q, _)| q as i64)
            .sum(),
        Polarity::UseZeros => {
            let zeros: i64 = q_group
                .iter()
                .zip(bit_group)
                .filter(|(_, &b)| !b)
                .map(|(&q, _)| q as i64)
                .sum();
            q_sum - zeros
        }
    }
}

/// Whole-plane dot product through a [`GroupPlan`]. Equals the direct masked
/// sum bit-exactly.
pub fn plane_dot(q_row: &[i8], plane_bits: &[bool], plan: &GroupPlan, qsums: &QSums) -> i64 {
    debug_assert_eq!(plan.group_size, qsums.group_size);
    let g = plan.group_size;
    let mut total = 0i64;
    for (gi, info) in plan.groups.iter().enumerate() {
        let start = gi * g;
        let end = (start + g).min(q_row.len());
        if start >= q_row.len() {
            break;
        }
        // Pad the tail group with zero bits and zero query entries.
        let mut qb = vec![0i8; g];
        let mut bb = vec![false; g];
        qb[..end - start].copy_from_slice(&q_row[start..end]);
        for (o, b) in bb.iter_mut().enumerate().take(end - start) {
            *b = plane_bits[start + o];
        }
        total += group_dot(&qb, &bb, info.polarity, qsums.sums[gi]);
    }
    total
}

/// Lane cycle-cost model for processing one plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneCost {
    /// One effective 1-bit per cycle over the raw plane.
    NaiveSerial,
    /// One effective bit per cycle after per-group polarity selection.
    BalancedSerial,
    /// Grouped select-and-accumulate tree: all groups in parallel, one plane
    /// per cycle in steady state. Pipeline fill is charged separately via
    /// [`pipeline_fill_cycles`].
    GroupedTree,
}

/// Steady-state cycles to process one plane under the given cost model.
pub fn plane_cycle_cost(plan: &GroupPlan, model: LaneCost) -> u64 {
    match model {
        LaneCost::NaiveSerial => plan.raw_ones() as u64,
        LaneCost::BalancedSerial => plan
            .groups
            .iter()
            .map(|g| g.ones.min(g.zeros) as u64)
            .sum(),
        LaneCost::GroupedTree => 1,
    }
}

/// One-time pipeline fill for a lane reusing a single priority encoder
/// across time steps: `ceil(g/2) + 1` cycles.
pub fn pipeline_fill_cycles(group_size: usize) -> u64 {
    (group_size as u64).div_ceil(2) + 1
}

/// Direct masked sum, the oracle both polarities must match.
pub fn masked_sum(q_row: &[i8], plane_bits: &[bool]) -> i64 {
    q_row
        .iter()
        .zip(plane_bits)
        .filter(|(_, &b)| b)
        .map(|(&q, _)| q as i64)
        .sum()
}
