//! Guarded filtering: a running pruning threshold over score lower bounds,
//! per-round keep/prune decisions, and the canonical pruning pipeline for
//! one query row.
//!
//! After each computed plane, a key's score is known to lie in
//! `[S^r + I_min, S^r + I_max]`. The threshold tracks the best lower bound
//! seen so far minus a margin of `alpha * radius` (expressed in dequantized
//! logit units and converted through `score_scale`), and a key is pruned as
//! soon as its upper bound falls below the threshold. Because the softmax
//! weight of a score decays exponentially with its gap to the row maximum,
//! every pruned key is guaranteed a dense softmax weight below
//! `e^(-alpha * radius)` regardless of visit order.

use crate::bitplane::{partial_score, BitPlanes};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Pruning configuration.
///
/// `radius` is in dequantized logit units; `score_scale` converts quantized
/// integer scores to logits (`scale_q * scale_k / sqrt(d)`), so the margin in
/// quantized units is `alpha * radius / score_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub alpha: f64,
    pub radius: f64,
    pub bits: u32,
    pub score_scale: f64,
}

impl PruneConfig {
    pub const DEFAULT_RADIUS: f64 = 5.0;

    pub fn new(alpha: f64, radius: f64, bits: u32, score_scale: f64) -> Result<Self> {
        let cfg = PruneConfig {
            alpha,
            radius,
            bits,
            score_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::invalid_config("alpha", "must be within [0, 1]"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid_config("radius", "must be positive"));
        }
        if !(self.score_scale > 0.0) || !self.score_scale.is_finite() {
            return Err(Error::invalid_config("score_scale", "must be positive and finite"));
        }
        if self.bits != 4 && self.bits != 8 {
            return Err(Error::invalid_config("bits", "must be 4 or 8"));
        }
        Ok(())
    }

    /// Pruning margin converted to quantized score units.
    pub fn margin_quantized(&self) -> f64 {
        self.alpha * self.radius / self.score_scale
    }

    /// A configuration whose margin is so wide that nothing is ever pruned.
    pub fn retain_all(bits: u32, score_scale: f64) -> Self {
        PruneConfig {
            alpha: 1.0,
            radius: 1e18,
            bits,
            score_scale,
        }
    }
}

/// Update the running threshold with a newly observed lower bound.
///
/// `T' = max(T, lower_bound - margin)`; the threshold never decreases.
pub fn update_threshold(current: f64, lower_bound: i64, cfg: &PruneConfig) -> f64 {
    current.max(lower_bound as f64 - cfg.margin_quantized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Prune,
}

/// Keep while the score upper bound still reaches the threshold.
///
/// Ties keep: a key whose collapsed interval equals the threshold (its own
/// lower bound at `alpha = 0`) must survive, so the test is `UB >= T`.
pub fn decide(partial: i64, interval_max: i64, threshold: f64) -> Decision {
    if (partial + interval_max) as f64 >= threshold {
        Decision::Keep
    } else {
        Decision::Prune
    }
}

/// Bounded map from key index to in-flight partial score state.
#[derive(Debug, Clone)]
pub struct Scoreboard {
    capacity: usize,
    entries: BTreeMap<usize, ScoreboardEntry>,
    peak_occupancy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreboardEntry {
    pub partial_score: i64,
    /// Planes folded into `partial_score` so far (1..=p).
    pub rounds_done: u32,
}

impl Scoreboard {
    pub const DEFAULT_CAPACITY: usize = 32;

    pub fn new(capacity: usize) -> Self {
        Scoreboard {
            capacity,
            entries: BTreeMap::new(),
            peak_occupancy: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.entries.len()
    }

    pub fn peak_occupancy(&self) -> usize {
        self.peak_occupancy
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn get(&self, key: usize) -> Option<&ScoreboardEntry> {
        self.entries.get(&key)
    }

    /// Insert a fresh entry. Returns false (and leaves the board unchanged)
    /// when the board is full.
    pub fn insert(&mut self, key: usize, entry: ScoreboardEntry) -> bool {
        if self.is_full() && !self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, entry);
        self.peak_occupancy = self.peak_occupancy.max(self.entries.len());
        true
    }

    /// Fold one more plane's contribution into an existing entry.
    pub fn update(&mut self, key: usize, delta: i64) -> Option<ScoreboardEntry> {
        let e = self.entries.get_mut(&key)?;
        e.partial_score += delta;
        e.rounds_done += 1;
        Some(*e)
    }

    /// Remove an entry on prune or retirement.
    pub fn evict(&mut self, key: usize) -> Option<ScoreboardEntry> {
        self.entries.remove(&key)
    }
}

/// Outcome for one key after filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyOutcome {
    /// Survived all planes; carries the exact integer score.
    Retained { score: i64 },
    /// Pruned after computing planes `0..=round`.
    Pruned { round: u32 },
}

impl KeyOutcome {
    pub fn is_retained(&self) -> bool {
        matches!(self, KeyOutcome::Retained { .. })
    }
}

/// Deterministic record of one query row's filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub outcomes: Vec<KeyOutcome>,
    /// Planes fetched per key: `p` for retained keys, `round + 1` for keys
    /// pruned at `round`.
    pub planes_fetched: Vec<u32>,
    pub final_threshold: f64,
    /// Threshold after every observed lower bound, in observation order.
    pub threshold_history: Vec<f64>,
}

impl PruneTrace {
    /// Retained `(key index, exact score)` pairs in key order.
    pub fn retained(&self) -> Vec<(usize, i64)> {
        self.outcomes
            .iter()
            .enumerate()
            .filter_map(|(k, o)| match o {
                KeyOutcome::Retained { score } => Some((k, *score)),
                KeyOutcome::Pruned { .. } => None,
            })
            .collect()
    }

    pub fn retained_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_retained()).count()
    }

    pub fn total_planes_fetched(&self) -> u64 {
        self.planes_fetched.iter().map(|&p| p as u64).sum()
    }
}

/// Incremental filter over a growing observation window of keys.
///
/// Keys are observed one at a time; each observation advances the key
/// MSB-to-LSB, folding every new lower bound into the threshold before the
/// keep/prune decision for that round. Because the threshold only grows,
/// a key pruned at window size `w` stays pruned at every larger window.
#[derive(Debug, Clone)]
pub struct WindowFilter<'a> {
    q_row: &'a [i8],
    intervals: &'a [(i64, i64)],
    cfg: PruneConfig,
    threshold: f64,
    history: Vec<f64>,
    observed: usize,
}

impl<'a> WindowFilter<'a> {
    pub fn new(q_row: &'a [i8], intervals: &'a [(i64, i64)], cfg: PruneConfig) -> Self {
        debug_assert_eq!(intervals.len(), cfg.bits as usize);
        WindowFilter {
            q_row,
            intervals,
            cfg,
            threshold: f64::NEG_INFINITY,
            history: Vec::new(),
            observed: 0,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Keys observed so far (the current window size).
    pub fn window(&self) -> usize {
        self.observed
    }

    /// Process all planes of one key under the current window.
    pub fn observe(&mut self, key: &BitPlanes) -> KeyOutcome {
        self.observed += 1;
        let p = self.cfg.bits as usize;
        let mut score = 0i64;
        for r in 0..p {
            score += BitPlanes::plane_weight(self.cfg.bits, r as u32)
                * crate::bitplane::plane_bit_sum(self.q_row, key, r);
            debug_assert_eq!(score, partial_score(self.q_row, key, r));
            let (i_min, i_max) = self.intervals[r];
            self.threshold = update_threshold(self.threshold, score + i_min, &self.cfg);
            self.history.push(self.threshold);
            if decide(score, i_max, self.threshold) == Decision::Prune {
                return KeyOutcome::Pruned { round: r as u32 };
            }
        }
        KeyOutcome::Retained { score }
    }

    pub fn into_history(self) -> Vec<f64> {
        self.history
    }
}

/// Canonical filtering of one query row: keys visited in index order, full
/// bit rounds interleaved with threshold updates.
pub fn filter_row(
    q_row: &[i8],
    keys: &[BitPlanes],
    intervals: &[(i64, i64)],
    cfg: &PruneConfig,
) -> PruneTrace {
    let mut filter = WindowFilter::new(q_row, intervals, *cfg);
    let mut outcomes = Vec::with_capacity(keys.len());
    let mut planes_fetched = Vec::with_capacity(keys.len());
    for key in keys {
        let outcome = filter.observe(key);
        planes_fetched.push(match outcome {
            KeyOutcome::Retained { .. } => cfg.bits,
            KeyOutcome::Pruned { round } => round + 1,
        });
        outcomes.push(outcome);
    }
    let final_threshold = filter.threshold();
    PruneTrace {
        outcomes,
        planes_fetched,
        final_threshold,
        threshold_history: filter.into_history(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitplane::{decompose, exact_score, uncertainty_row};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg(alpha: f64, score_scale: f64) -> PruneConfig {
        PruneConfig::new(alpha, 5.0, 8, score_scale).unwrap()
    }

    fn filter_ints(q: &[i8], keys: &[Vec<i8>], cfg: &PruneConfig) -> PruneTrace {
        let planes: Vec<_> = keys
            .iter()
            .enumerate()
            .map(|(j, k)| decompose(k, j, cfg.bits))
            .collect();
        let intervals = uncertainty_row(q, cfg.bits);
        filter_row(q, &planes, &intervals, cfg)
    }

    #[test]
    fn threshold_update_example() {
        let c = cfg(0.5, 1.0);
        let mut t = f64::NEG_INFINITY;
        for lb in [10i64, 3, 8] {
            t = update_threshold(t, lb, &c);
        }
        assert_eq!(t, 7.5);
    }

    #[test]
    fn alpha_zero_threshold_is_max_lower_bound() {
        let c = cfg(0.0, 1.0);
        let mut t = f64::NEG_INFINITY;
        for lb in [10i64, 3, 8] {
            t = update_threshold(t, lb, &c);
        }
        assert_eq!(t, 10.0);
    }

    #[test]
    fn smaller_lower_bound_leaves_threshold_unchanged() {
        let c = cfg(0.5, 1.0);
        let t = update_threshold(7.5, 2, &c);
        assert_eq!(t, 7.5);
    }

    #[test]
    fn decide_on_msb_example() {
        // S0 = -40, I_max = 70 gives UB 30, which clears a threshold of 7.5.
        assert_eq!(decide(-40, 70, 7.5), Decision::Keep);
    }

    #[test]
    fn decide_vacuous_threshold_always_keeps() {
        assert_eq!(decide(-1_000_000, 0, f64::NEG_INFINITY), Decision::Keep);
    }

    #[test]
    fn decide_prunes_collapsed_interval_below_threshold() {
        // Last round: interval collapsed, exact score strictly below T.
        assert_eq!(decide(5, 0, 9.0), Decision::Prune);
        // Ties keep.
        assert_eq!(decide(9, 0, 9.0), Decision::Keep);
    }

    #[test]
    fn single_key_always_retained() {
        for alpha in [0.0, 0.3, 1.0] {
            let c = cfg(alpha, 1.0);
            let q: Vec<i8> = vec![3, -7, 11, 2];
            let k: Vec<i8> = vec![9, 1, -4, 8];
            let trace = filter_ints(&q, &[k], &c);
            assert!(trace.outcomes[0].is_retained(), "alpha {alpha}");
            assert_eq!(trace.planes_fetched, vec![8]);
        }
    }

    #[test]
    fn planted_dominant_key_is_the_sole_survivor() {
        // First key aligned with the query at +120, the rest near -120. Once
        // the dominant key's lower bound sets the threshold, every later key
        // dies on its sign plane.
        let dim = 16;
        let q = vec![20i8; dim];
        let mut keys = vec![vec![-120i8; dim]; 8];
        keys[0] = vec![120i8; dim];
        let scale = 0.01; // logit gap is huge relative to the margin
        let c = cfg(0.5, scale);
        let trace = filter_ints(&q, &keys, &c);
        let retained = trace.retained();
        assert_eq!(retained.len(), 1);
        assert_eq!(retained[0].0, 0);
        assert_eq!(retained[0].1, exact_score(&q, &keys[0]));
        // Later keys were killed after a single plane.
        assert!(trace.planes_fetched[1..].iter().all(|&p| p == 1));
    }

    #[test]
    fn retained_superset_of_near_max_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dim = 64;
        let c = cfg(0.6, 0.02);
        for _ in 0..8 {
            let q: Vec<i8> = (0..dim).map(|_| rng.random_range(-128..=127i32) as i8).collect();
            let keys: Vec<Vec<i8>> = (0..64)
                .map(|_| (0..dim).map(|_| rng.random_range(-128..=127i32) as i8).collect())
                .collect();
            let trace = filter_ints(&q, &keys, &c);
            let exact: Vec<i64> = keys.iter().map(|k| exact_score(&q, k)).collect();
            let max = *exact.iter().max().unwrap();
            let cutoff = max as f64 - c.margin_quantized();
            for (j, &s) in exact.iter().enumerate() {
                if (s as f64) > cutoff {
                    assert!(
                        trace.outcomes[j].is_retained(),
                        "key {j} with score {s} (max {max}) was pruned"
                    );
                }
            }
        }
    }

    #[test]
    fn threshold_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q: Vec<i8> = (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect();
        let keys: Vec<Vec<i8>> = (0..32)
            .map(|_| (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect())
            .collect();
        let trace = filter_ints(&q, &keys, &cfg(0.5, 0.05));
        for w in trace.threshold_history.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(trace.final_threshold, *trace.threshold_history.last().unwrap());
    }

    #[test]
    fn aggressiveness_monotone_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let q: Vec<i8> = (0..48).map(|_| rng.random_range(-128..=127i32) as i8).collect();
        let keys: Vec<Vec<i8>> = (0..48)
            .map(|_| (0..48).map(|_| rng.random_range(-128..=127i32) as i8).collect())
            .collect();
        let mut previous: Option<Vec<bool>> = None;
        for alpha in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let trace = filter_ints(&q, &keys, &cfg(alpha, 0.05));
            let retained: Vec<bool> = trace.outcomes.iter().map(|o| o.is_retained()).collect();
            if let Some(prev) = &previous {
                for (j, (&small, &large)) in prev.iter().zip(&retained).enumerate() {
                    assert!(!small || large, "key {j} retained at smaller alpha only");
                }
            }
            previous = Some(retained);
        }
    }

    #[test]
    fn identical_inputs_identical_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Vec<i8> = (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect();
        let keys: Vec<Vec<i8>> = (0..16)
            .map(|_| (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect())
            .collect();
        let c = cfg(0.5, 0.05);
        assert_eq!(filter_ints(&q, &keys, &c), filter_ints(&q, &keys, &c));
    }

    #[test]
    fn scoreboard_respects_capacity() {
        let mut sb = Scoreboard::new(2);
        assert!(sb.insert(0, ScoreboardEntry { partial_score: 1, rounds_done: 1 }));
        assert!(sb.insert(1, ScoreboardEntry { partial_score: 2, rounds_done: 1 }));
        assert!(!sb.insert(2, ScoreboardEntry { partial_score: 3, rounds_done: 1 }));
        assert_eq!(sb.occupancy(), 2);
        sb.evict(0);
        assert!(sb.insert(2, ScoreboardEntry { partial_score: 3, rounds_done: 1 }));
        assert_eq!(sb.peak_occupancy(), 2);
        assert_eq!(sb.update(2, 4).unwrap().partial_score, 7);
        assert_eq!(sb.update(2, 0).unwrap().rounds_done, 3);
    }

    #[test]
    fn observation_window_grows_one_key_at_a_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Vec<i8> = (0..16).map(|_| rng.random_range(-128..=127i32) as i8).collect();
        let keys: Vec<Vec<i8>> = (0..6)
            .map(|_| (0..16).map(|_| rng.random_range(-128..=127i32) as i8).collect())
            .collect();
        let planes: Vec<_> = keys.iter().enumerate().map(|(j, k)| decompose(k, j, 8)).collect();
        let intervals = uncertainty_row(&q, 8);
        let mut filter = WindowFilter::new(&q, &intervals, cfg(0.5, 0.05));
        for (expected, key) in planes.iter().enumerate() {
            assert_eq!(filter.window(), expected);
            filter.observe(key);
        }
        assert_eq!(filter.window(), 6);
    }

    #[test]
    fn window_pruning_never_flips_with_larger_windows() {
        // Replay each prefix window; a key pruned in a smaller window must be
        // pruned in every extension.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q: Vec<i8> = (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect();
        let keys: Vec<Vec<i8>> = (0..24)
            .map(|_| (0..32).map(|_| rng.random_range(-128..=127i32) as i8).collect())
            .collect();
        let c = cfg(0.4, 0.05);
        let planes: Vec<_> = keys.iter().enumerate().map(|(j, k)| decompose(k, j, 8)).collect();
        let intervals = uncertainty_row(&q, 8);
        let mut pruned_at: Vec<Vec<usize>> = Vec::new();
        for w in 1..=keys.len() {
            let mut filter = WindowFilter::new(&q, &intervals, c);
            let mut pruned = Vec::new();
            for key in &planes[..w] {
                if !filter.observe(key).is_retained() {
                    pruned.push(key.key_index);
                }
            }
            assert_eq!(filter.window(), w);
            pruned_at.push(pruned);
        }
        for w in 1..pruned_at.len() {
            for key in &pruned_at[w - 1] {
                assert!(pruned_at[w].contains(key), "key {key} flipped at window {w}");
            }
        }
    }
}
