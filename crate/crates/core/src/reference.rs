//! Ground-truth oracles: dense double-precision attention, two-pass softmax,
//! exact softmax weights for pruning-bound checks, and accuracy reports.

use crate::error::{Error, Result};
use crate::filter::PruneTrace;
use serde::{Deserialize, Serialize};

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, dim: usize) -> Self {
        assert_eq!(data.len(), rows * dim);
        Matrix { data, rows, dim }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scaled attention logits for one query row: `q . k_j / sqrt(d)`.
pub fn logits_row(q_row: &[f64], keys: &Matrix) -> Vec<f64> {
    let scale = 1.0 / (q_row.len() as f64).sqrt();
    (0..keys.rows).map(|j| dot(q_row, keys.row(j)) * scale).collect()
}

/// Two-pass softmax: subtract the max, exponentiate, normalize.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Dense attention `softmax(Q K^T / sqrt(d)) V` in double precision.
pub fn dense_attention(q: &Matrix, keys: &Matrix, values: &Matrix) -> Result<Matrix> {
    if q.dim != keys.dim {
        return Err(Error::dimension_mismatch(format!(
            "query dim {} vs key dim {}",
            q.dim, keys.dim
        )));
    }
    if keys.rows != values.rows {
        return Err(Error::dimension_mismatch(format!(
            "{} keys vs {} value rows",
            keys.rows, values.rows
        )));
    }
    let mut out = vec![0.0; q.rows * values.dim];
    for i in 0..q.rows {
        let weights = softmax(&logits_row(q.row(i), keys));
        let row = &mut out[i * values.dim..(i + 1) * values.dim];
        for (j, &w) in weights.iter().enumerate() {
            for (o, &v) in row.iter_mut().zip(values.row(j)) {
                *o += w * v;
            }
        }
    }
    Ok(Matrix::new(out, q.rows, values.dim))
}

/// Softmax weights restricted to a subset of keys (used to validate tiled
/// outputs against the retained set).
pub fn softmax_over_subset(logits: &[f64], subset: &[usize]) -> Vec<f64> {
    let sub: Vec<f64> = subset.iter().map(|&j| logits[j]).collect();
    softmax(&sub)
}

/// Check the softmax decay bound: the weight of `x0` against `x0 + delta`
/// is `1 / (1 + e^delta)`, which is strictly below `e^(-delta)`.
pub fn softmax_decay_bound_holds(x0: f64, delta: f64) -> bool {
    assert!(delta >= 0.0 && x0.is_finite());
    let weight = softmax(&[x0, x0 + delta])[0];
    weight < (-delta).exp()
}

/// Comparison of a sparse output against the dense oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub max_abs_error: f64,
    /// Per-row cosine similarity between sparse and dense outputs.
    pub cosine_similarity: Vec<f64>,
    /// Retained keys / total keys, averaged over query rows.
    pub retained_fraction: f64,
    /// Largest dense softmax weight among pruned keys, across all rows.
    pub pruned_weight_max: f64,
}

/// Build an [`AccuracyReport`] from sparse outputs, the dense oracle output,
/// per-row dense logits, and the per-row prune traces.
pub fn accuracy_report(
    sparse: &Matrix,
    dense: &Matrix,
    logits: &[Vec<f64>],
    traces: &[PruneTrace],
) -> Result<AccuracyReport> {
    if sparse.rows != dense.rows || sparse.dim != dense.dim {
        return Err(Error::dimension_mismatch(format!(
            "sparse {}x{} vs dense {}x{}",
            sparse.rows, sparse.dim, dense.rows, dense.dim
        )));
    }
    if logits.len() != sparse.rows || traces.len() != sparse.rows {
        return Err(Error::dimension_mismatch(
            "one logit row and one trace per query row".to_string(),
        ));
    }
    let mut max_abs = 0.0f64;
    let mut cosine = Vec::with_capacity(sparse.rows);
    for i in 0..sparse.rows {
        let (a, b) = (sparse.row(i), dense.row(i));
        for (&x, &y) in a.iter().zip(b) {
            max_abs = max_abs.max((x - y).abs());
        }
        let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
        cosine.push(if na == 0.0 || nb == 0.0 {
            1.0
        } else {
            (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
        });
    }
    let mut retained = 0usize;
    let mut total = 0usize;
    let mut pruned_weight_max = 0.0f64;
    for (i, trace) in traces.iter().enumerate() {
        let weights = softmax(&logits[i]);
        for (j, outcome) in trace.outcomes.iter().enumerate() {
            total += 1;
            if outcome.is_retained() {
                retained += 1;
            } else {
                pruned_weight_max = pruned_weight_max.max(weights[j]);
            }
        }
    }
    Ok(AccuracyReport {
        max_abs_error: max_abs,
        cosine_similarity: cosine,
        retained_fraction: if total == 0 { 1.0 } else { retained as f64 / total as f64 },
        pruned_weight_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_key_returns_its_value_row() {
        let q = Matrix::new(vec![1.0, 2.0], 1, 2);
        let k = Matrix::new(vec![0.5, -0.5], 1, 2);
        let v = Matrix::new(vec![3.0, 4.0, 5.0], 1, 3);
        let out = dense_attention(&q, &k, &v).unwrap();
        assert_eq!(out.row(0), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn identical_scores_average_the_values() {
        // Zero query gives uniform logits regardless of keys.
        let q = Matrix::new(vec![0.0, 0.0], 1, 2);
        let k = Matrix::new(vec![1.0, 2.0, -3.0, 0.5], 2, 2);
        let v = Matrix::new(vec![2.0, 0.0, 0.0, 4.0], 2, 2);
        let out = dense_attention(&q, &k, &v).unwrap();
        assert!((out.row(0)[0] - 1.0).abs() < 1e-12);
        assert!((out.row(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_weights_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..8 {
            let logits: Vec<f64> = (0..64).map(|_| rng.random_range(-30.0..30.0)).collect();
            let sum: f64 = softmax(&logits).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_bound_examples() {
        // delta = 0: weight is exactly one half, below e^0 = 1.
        assert!(softmax_decay_bound_holds(0.3, 0.0));
        // delta = 2.5: weight 1/(1+e^2.5) ~ 0.0759 < e^-2.5 ~ 0.0821.
        assert!(softmax_decay_bound_holds(-1.0, 2.5));
        let w = softmax(&[0.0, 2.5])[0];
        assert!(w < 0.0821 && (w - 0.0759).abs() < 5e-4);
    }

    #[test]
    fn decay_bound_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x0 = rng.random_range(-50.0..50.0);
            let delta = rng.random_range(0.0..20.0);
            assert!(softmax_decay_bound_holds(x0, delta));
        }
    }

    #[test]
    fn report_rejects_mismatched_shapes() {
        let a = Matrix::new(vec![0.0; 4], 2, 2);
        let b = Matrix::new(vec![0.0; 6], 2, 3);
        assert!(accuracy_report(&a, &b, &[], &[]).is_err());
    }

    #[test]
    fn retain_all_error_is_quantization_only() {
        // With nothing pruned, the sparse path differs from the real-valued
        // oracle by quantization alone.
        use crate::filter::PruneConfig;
        use crate::tiling::{attend_row, TileOrder};
        use crate::workload::{generate, Generator, WorkloadSpec};
        let spec = WorkloadSpec {
            seed: 51,
            seq_len: 48,
            head_dim: 32,
            queries: 2,
            generator: Generator::Uniform,
        };
        let w = generate(&spec).unwrap();
        let cfg = PruneConfig::retain_all(8, w.score_scale());
        let dense_real = dense_attention(&w.q, &w.k, &w.v).unwrap();
        let (dq, dk, dv) = w.dequantized();
        let dense_quant = dense_attention(&dq, &dk, &dv).unwrap();
        for qi in 0..w.q_int.rows {
            let sparse =
                attend_row(w.q_int.row(qi), &w.k_int, &w.v_int, &cfg, 16, TileOrder::LeftToRight)
                    .unwrap();
            let err = |a: &[f64], b: &[f64]| {
                a.iter().zip(b).fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
            };
            let sparse_err = err(&sparse.output, dense_real.row(qi));
            let quant_err = err(dense_quant.row(qi), dense_real.row(qi));
            assert!(sparse_err <= quant_err + 1e-9, "{sparse_err} vs {quant_err}");
        }
    }

    #[test]
    fn planted_dominant_key_keeps_cosine_high() {
        use crate::filter::PruneConfig;
        use crate::tiling::{attend_row, TileOrder};
        use crate::workload::{generate, Generator, WorkloadSpec};
        let spec = WorkloadSpec {
            seed: 53,
            seq_len: 64,
            head_dim: 64,
            queries: 2,
            generator: Generator::Peaked { dominant: 1, margin: 8.0 },
        };
        let w = generate(&spec).unwrap();
        let cfg = PruneConfig::new(0.5, 5.0, 8, w.score_scale()).unwrap();
        let dense = dense_attention(&w.q, &w.k, &w.v).unwrap();
        let (dq, dk, _) = w.dequantized();
        let mut outputs = Vec::new();
        let mut traces = Vec::new();
        for qi in 0..w.q_int.rows {
            let row =
                attend_row(w.q_int.row(qi), &w.k_int, &w.v_int, &cfg, 16, TileOrder::LeftToRight)
                    .unwrap();
            outputs.extend_from_slice(&row.output);
            traces.push(row.trace);
        }
        let sparse = Matrix::new(outputs, w.q_int.rows, w.v_int.dim);
        let logits: Vec<Vec<f64>> = (0..dq.rows).map(|i| logits_row(dq.row(i), &dk)).collect();
        let report = accuracy_report(&sparse, &dense, &logits, &traces).unwrap();
        for c in &report.cosine_similarity {
            assert!(*c >= 0.99, "cosine {c}");
        }
        // alpha = 0.5, radius = 5: pruned weights stay under e^-2.5.
        assert!(report.pruned_weight_max < (-2.5f64).exp());
    }
}
