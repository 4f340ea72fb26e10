//! Seeded synthetic workload generation.
//!
//! The generators expose the two score properties the sparse pipeline
//! exploits: peakedness (a few keys dominate the softmax mass) and
//! positional locality (early and recent positions score high). Logits are
//! planted exactly by construction: queries align with a shared direction
//! `u`, and each key's projection onto `u` is set from a target logit, with
//! the orthogonal remainder carrying seeded noise.

use crate::bitplane::{self, QuantizedMatrix};
use crate::error::{Error, Result};
use crate::reference::Matrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Workload shape and generator parameters; serializable for cross-run
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub seq_len: usize,
    pub head_dim: usize,
    pub queries: usize,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Logits drawn uniformly from a small band; no planted structure.
    Uniform,
    /// `dominant` keys sit `margin` logits above the background band.
    Peaked { dominant: usize, margin: f64 },
    /// Keys in the leading `head_frac` and trailing `tail_frac` position
    /// fractions get a `boost`-logit lift over the middle.
    Locality { head_frac: f64, tail_frac: f64, boost: f64 },
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::invalid_config("workload.seq_len", "must be positive"));
        }
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return Err(Error::invalid_config(
                "workload.head_dim",
                "must be positive and even",
            ));
        }
        if self.queries == 0 {
            return Err(Error::invalid_config("workload.queries", "must be positive"));
        }
        match &self.generator {
            Generator::Uniform => {}
            Generator::Peaked { dominant, margin } => {
                if *dominant == 0 || *dominant > self.seq_len {
                    return Err(Error::invalid_config(
                        "workload.dominant",
                        format!("must be within 1..={}", self.seq_len),
                    ));
                }
                if !(*margin > 0.0) {
                    return Err(Error::invalid_config("workload.margin", "must be positive"));
                }
            }
            Generator::Locality { head_frac, tail_frac, boost } => {
                if !(0.0..=0.5).contains(head_frac) || !(0.0..=0.5).contains(tail_frac) {
                    return Err(Error::invalid_config(
                        "workload.head_frac/tail_frac",
                        "must be within [0, 0.5]",
                    ));
                }
                if !(*boost > 0.0) {
                    return Err(Error::invalid_config("workload.boost", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Serialize to the structured-text interchange form.
    pub fn export(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn import(text: &str) -> Result<Self> {
        let spec: WorkloadSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Real operands plus their quantized forms and derived pruning scale.
#[derive(Debug, Clone)]
pub struct Workload {
    pub spec: WorkloadSpec,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub q_int: QuantizedMatrix,
    pub k_int: QuantizedMatrix,
    pub v_int: QuantizedMatrix,
}

impl Workload {
    /// Quantized-score-to-logit conversion: `scale_q * scale_k / sqrt(d)`.
    pub fn score_scale(&self) -> f64 {
        self.q_int.scale * self.k_int.scale / (self.spec.head_dim as f64).sqrt()
    }

    /// Dequantized views of the quantized operands — the inputs the sparse
    /// engine effectively computes with.
    pub fn dequantized(&self) -> (Matrix, Matrix, Matrix) {
        let deq = |m: &QuantizedMatrix| {
            Matrix::new(
                m.values.iter().map(|&x| x as f64 * m.scale).collect(),
                m.rows,
                m.dim,
            )
        };
        (deq(&self.q_int), deq(&self.k_int), deq(&self.v_int))
    }
}

/// Target logit band per key position.
fn target_logits(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = spec.seq_len;
    match &spec.generator {
        Generator::Uniform => (0..s).map(|_| rng.random_range(-2.0..2.0)).collect(),
        Generator::Peaked { dominant, margin } => {
            let background_hi = 1.5;
            let mut logits: Vec<f64> = (0..s).map(|_| rng.random_range(-1.5..background_hi)).collect();
            // Diagonal placement spreads dominant keys across positions and
            // across lane residues, so no single lane owns all of them.
            let stride = (s / dominant.max(&1)).max(1);
            for d in 0..*dominant {
                let pos = (d * stride + d) % s;
                logits[pos] = background_hi + margin + rng.random_range(0.0..0.5);
            }
            logits
        }
        Generator::Locality { head_frac, tail_frac, boost } => {
            // Both ends sit a full boost above the middle. Within the tail
            // the lift climbs toward the most recent token, which ends up
            // with the global maximum; the initial-token region carries a
            // gentler slope. Tight in-region noise keeps those slopes
            // monotone at tile granularity.
            let head = ((s as f64 * head_frac).ceil() as usize).min(s);
            let tail = ((s as f64 * tail_frac).ceil() as usize).min(s);
            (0..s)
                .map(|j| {
                    if j < head {
                        let taper = 1.0 - j as f64 / head.max(1) as f64;
                        rng.random_range(-0.25..0.25) + boost * (1.0 + 0.25 * taper)
                    } else if j >= s - tail {
                        let taper = (j - (s - tail) + 1) as f64 / tail.max(1) as f64;
                        rng.random_range(-0.25..0.25) + boost * (1.0 + taper)
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        }
    }
}

/// Generate a reproducible workload from its spec.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.head_dim;
    let s = spec.seq_len;
    let sqrt_d = (d as f64).sqrt();

    // Shared unit direction u; queries are strong multiples of u plus small
    // orthogonal noise so planted logits survive across query rows.
    let u: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    };
    let q_mag = 4.0 * sqrt_d;
    let mut q_data = Vec::with_capacity(spec.queries * d);
    for _ in 0..spec.queries {
        for &ui in &u {
            q_data.push(q_mag * ui + rng.random_range(-0.05..0.05));
        }
    }

    let logits = target_logits(spec, &mut rng);
    let mut k_data = Vec::with_capacity(s * d);
    for &t in &logits {
        // Choose k = (t * sqrt(d) / q_mag) * u + w with w roughly orthogonal
        // to u, so q . k / sqrt(d) lands at t up to noise.
        let proj = t * sqrt_d / q_mag;
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-0.4..0.4)).collect();
        let w_dot_u: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
        for j in 0..d {
            k_data.push(proj * u[j] + (w[j] - w_dot_u * u[j]));
        }
    }

    let v_data: Vec<f64> = (0..s * d).map(|_| rng.random_range(-1.0..1.0)).collect();

    let q = Matrix::new(q_data, spec.queries, d);
    let k = Matrix::new(k_data, s, d);
    let v = Matrix::new(v_data, s, d);
    let q_int = bitplane::quantize(&q.data, q.rows, q.dim, 8)?;
    let k_int = bitplane::quantize(&k.data, k.rows, k.dim, 8)?;
    let v_int = bitplane::quantize(&v.data, v.rows, v.dim, 8)?;
    Ok(Workload {
        spec: spec.clone(),
        q,
        k,
        v,
        q_int,
        k_int,
        v_int,
    })
}
