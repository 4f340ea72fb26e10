//! Value-fetch scheduling for irregular retained-score patterns.
//!
//! After pruning, each score row needs an arbitrary subset of the V vectors,
//! and a row can consume at most `capacity` vectors per round. A vector
//! fetched in a round is shared by every row served with it that round;
//! fetching it again later counts as a reload. The naive schedule walks each
//! row's needs left to right and pays for misaligned sharing; the
//! reuse-aware schedule groups vectors by their exact sharer set and emits a
//! group only when all of its sharers have capacity, so shared fetches are
//! never split.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Per-row V-vector requirements plus the per-round consumption capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsagePattern {
    /// `needs[row]` is the set of V indices the row must consume.
    pub needs: Vec<BTreeSet<usize>>,
    /// V vectors a row can consume per round.
    pub capacity: usize,
}

impl UsagePattern {
    pub const DEFAULT_CAPACITY: usize = 2;

    pub fn new(needs: Vec<BTreeSet<usize>>, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid_config("capacity", "must be positive"));
        }
        if needs.iter().any(|s| s.is_empty()) {
            return Err(Error::invalid_config("needs", "active rows must be non-empty"));
        }
        Ok(UsagePattern { needs, capacity })
    }

    pub fn distinct_vectors(&self) -> usize {
        self.needs.iter().flatten().collect::<BTreeSet<_>>().len()
    }

    /// The pattern from the reference walk-through: four score rows sharing
    /// eight V vectors with capacity 2. Naive scheduling costs 11 fetches.
    pub fn reference_example() -> Self {
        let needs = vec![
            BTreeSet::from([0, 1, 2, 3]),
            BTreeSet::from([2, 3, 4, 7]),
            BTreeSet::from([4, 5, 6, 7]),
            BTreeSet::from([2, 3, 4, 7]),
        ];
        UsagePattern { needs, capacity: 2 }
    }
}

/// One scheduling round: which V indices each row consumed.
pub type Round = BTreeMap<usize, Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchSchedule {
    pub rounds: Vec<Round>,
    /// Distinct V vectors fetched per round (reloads across rounds count).
    pub fetched: Vec<Vec<usize>>,
    pub total_fetches: usize,
}

impl FetchSchedule {
    fn from_rounds(rounds: Vec<Round>) -> Self {
        let fetched: Vec<Vec<usize>> = rounds
            .iter()
            .map(|r| {
                let set: BTreeSet<usize> = r.values().flatten().copied().collect();
                set.into_iter().collect()
            })
            .collect();
        let total_fetches = fetched.iter().map(Vec::len).sum();
        FetchSchedule {
            rounds,
            fetched,
            total_fetches,
        }
    }

    /// Validate coverage and capacity against the originating pattern.
    pub fn check(&self, pattern: &UsagePattern) -> Result<()> {
        let mut served: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); pattern.needs.len()];
        for round in &self.rounds {
            for (&row, vs) in round {
                if vs.len() > pattern.capacity {
                    return Err(Error::invalid_config(
                        "schedule",
                        format!("row {row} exceeds capacity in a round"),
                    ));
                }
                for &v in vs {
                    if !served[row].insert(v) {
                        return Err(Error::invalid_config(
                            "schedule",
                            format!("(row {row}, v {v}) served twice"),
                        ));
                    }
                }
            }
        }
        for (row, need) in pattern.needs.iter().enumerate() {
            if &served[row] != need {
                return Err(Error::invalid_config(
                    "schedule",
                    format!("row {row} served {:?}, needs {:?}", served[row], need),
                ));
            }
        }
        Ok(())
    }
}

/// Left-to-right baseline: every round, each unfinished row takes its next
/// `capacity` unserved indices in ascending order.
pub fn schedule_naive(pattern: &UsagePattern) -> FetchSchedule {
    let mut remaining: Vec<Vec<usize>> = pattern
        .needs
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    let mut rounds = Vec::new();
    while remaining.iter().any(|r| !r.is_empty()) {
        let mut round: Round = BTreeMap::new();
        for (row, rem) in remaining.iter_mut().enumerate() {
            if rem.is_empty() {
                continue;
            }
            let take = rem.len().min(pattern.capacity);
            round.insert(row, rem.drain(..take).collect());
        }
        rounds.push(round);
    }
    FetchSchedule::from_rounds(rounds)
}

/// Reuse-aware schedule: vectors grouped by their exact sharer set; each
/// round repeatedly emits one vector from the eligible group with the most
/// sharers (ties resolve to the lowest V index) until no group's sharers all
/// have capacity left.
pub fn schedule_reuse_aware(pattern: &UsagePattern) -> FetchSchedule {
    let mut remaining: Vec<BTreeSet<usize>> = pattern.needs.clone();
    let mut rounds = Vec::new();
    while remaining.iter().any(|r| !r.is_empty()) {
        let mut cap: Vec<usize> = remaining
            .iter()
            .map(|r| if r.is_empty() { 0 } else { pattern.capacity })
            .collect();
        let mut round: Round = BTreeMap::new();
        loop {
            // Sharer set per still-needed vector.
            let mut sharers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (row, rem) in remaining.iter().enumerate() {
                for &v in rem {
                    sharers.entry(v).or_default().push(row);
                }
            }
            // Eligible: every sharer can still consume this round. Pick the
            // widest sharer set; break ties toward the lowest V index.
            let pick = sharers
                .iter()
                .filter(|(_, rows)| rows.iter().all(|&r| cap[r] > 0))
                .max_by(|(va, ra), (vb, rb)| ra.len().cmp(&rb.len()).then(vb.cmp(va)))
                .map(|(&v, rows)| (v, rows.clone()));
            let Some((v, rows)) = pick else { break };
            for &row in &rows {
                cap[row] -= 1;
                remaining[row].remove(&v);
                round.entry(row).or_default().push(v);
            }
            let _ = rows;
        }
        debug_assert!(!round.is_empty(), "scheduler must make progress each round");
        rounds.push(round);
    }
    FetchSchedule::from_rounds(rounds)
}

/// Exhaustive-search bounds: beyond these the state space is intractable.
pub const BRUTE_FORCE_ROW_LIMIT: usize = 4;
pub const BRUTE_FORCE_VECTOR_LIMIT: usize = 8;

/// Exhaustive minimum-fetch schedule for tiny instances (at most
/// [`BRUTE_FORCE_ROW_LIMIT`] rows and [`BRUTE_FORCE_VECTOR_LIMIT`] distinct
/// vectors).
///
/// Iterative-deepening search over per-round assignments: each row takes any
/// up-to-capacity subset of its outstanding needs. The distinct count of
/// outstanding vectors is an admissible bound (every vector costs at least
/// one fetch), so the first deepening threshold that admits a complete
/// schedule is the minimum.
pub fn schedule_optimal_bruteforce(pattern: &UsagePattern) -> Result<FetchSchedule> {
    let vocab: Vec<usize> = pattern
        .needs
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if pattern.needs.len() > BRUTE_FORCE_ROW_LIMIT || vocab.len() > BRUTE_FORCE_VECTOR_LIMIT {
        return Err(Error::InstanceTooLarge {
            rows: pattern.needs.len(),
            vectors: vocab.len(),
            row_limit: BRUTE_FORCE_ROW_LIMIT,
            vector_limit: BRUTE_FORCE_VECTOR_LIMIT,
        });
    }
    let index_of: HashMap<usize, usize> = vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let start: Vec<u8> = pattern
        .needs
        .iter()
        .map(|s| s.iter().fold(0u8, |m, &v| m | 1 << index_of[&v]))
        .collect();

    fn subsets_up_to(mask: u8, cap: usize) -> Vec<u8> {
        let mut out = vec![0u8];
        let mut sub = mask;
        loop {
            if sub != 0 && (sub.count_ones() as usize) <= cap {
                out.push(sub);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        out
    }

    fn distinct(masks: &[u8]) -> usize {
        masks.iter().fold(0u8, |a, &m| a | m).count_ones() as usize
    }

    /// Depth-first search for a schedule finishing within `budget` fetches.
    fn dfs(masks: &[u8], budget: usize, cap: usize, rounds: &mut Vec<Vec<u8>>) -> bool {
        if masks.iter().all(|&m| m == 0) {
            return true;
        }
        let per_row: Vec<Vec<u8>> = masks.iter().map(|&m| subsets_up_to(m, cap)).collect();
        let mut choice = vec![0usize; masks.len()];
        loop {
            let assignment: Vec<u8> = choice
                .iter()
                .enumerate()
                .map(|(r, &c)| per_row[r][c])
                .collect();
            let fetched = assignment.iter().fold(0u8, |a, &m| a | m);
            if fetched != 0 {
                let cost = fetched.count_ones() as usize;
                let next: Vec<u8> = masks
                    .iter()
                    .zip(&assignment)
                    .map(|(&m, &a)| m & !a)
                    .collect();
                if cost + distinct(&next) <= budget {
                    rounds.push(assignment);
                    if dfs(&next, budget - cost, cap, rounds) {
                        return true;
                    }
                    rounds.pop();
                }
            }
            // Advance the mixed-radix choice counter.
            let mut i = 0;
            loop {
                if i == choice.len() {
                    break;
                }
                choice[i] += 1;
                if choice[i] < per_row[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                return false;
            }
        }
    }

    // The greedy total is a valid upper bound, so deepening terminates.
    let ceiling = schedule_reuse_aware(pattern).total_fetches;
    let mut assignments: Vec<Vec<u8>> = Vec::new();
    let mut budget = distinct(&start);
    while !dfs(&start, budget, pattern.capacity, &mut assignments) {
        assignments.clear();
        budget += 1;
        if budget > ceiling {
            return Err(Error::Internal(
                "exhaustive schedule search exceeded its greedy upper bound".to_string(),
            ));
        }
    }

    let rounds: Vec<Round> = assignments
        .iter()
        .map(|assignment| {
            let mut round: Round = BTreeMap::new();
            for (row, &mask) in assignment.iter().enumerate() {
                if mask == 0 {
                    continue;
                }
                let vs: Vec<usize> =
                    (0..8).filter(|b| mask >> b & 1 == 1).map(|b| vocab[b]).collect();
                round.insert(row, vs);
            }
            round
        })
        .collect();
    Ok(FetchSchedule::from_rounds(rounds))
}
