//! Run configuration: file schema, loading, and validation.
//!
//! Configs are JSON with flat, documented field paths; every validation
//! failure names the offending field. Seeds are mandatory so repeated runs
//! are byte-identical.

use anyhow::{anyhow, Context};
use bitprune::filter::PruneConfig;
use bitprune::sim::SimConfig;
use bitprune::workload::{Generator, Workload, WorkloadSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; no implicit entropy anywhere.
    pub seed: u64,
    #[serde(default)]
    pub workload: WorkloadShape,
    #[serde(default)]
    pub prune: PruneParams,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Alpha grid for the `sweep` subcommand.
    #[serde(default)]
    pub sweep_alphas: Vec<f64>,
}

fn default_repetitions() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadShape {
    pub seq_len: usize,
    pub head_dim: usize,
    pub queries: usize,
    pub generator: Generator,
}

impl Default for WorkloadShape {
    fn default() -> Self {
        WorkloadShape {
            seq_len: 64,
            head_dim: 64,
            queries: 8,
            generator: Generator::Peaked { dominant: 4, margin: 8.0 },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneParams {
    pub alpha: f64,
    pub radius: f64,
    pub bits: u32,
}

impl Default for PruneParams {
    fn default() -> Self {
        PruneParams {
            alpha: 0.55,
            radius: 5.0,
            bits: 8,
        }
    }
}

impl RunConfig {
    /// Load and validate, reporting schema violations with field paths.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow!("config schema violation at `{}`: {}", e.path(), e.inner()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.workload_spec().validate()?;
        self.sim.validate()?;
        if self.repetitions == 0 {
            return Err(anyhow!("repetitions: must be positive"));
        }
        if !(0.0..=1.0).contains(&self.prune.alpha) {
            return Err(anyhow!("prune.alpha: must be within [0, 1]"));
        }
        if !(self.prune.radius > 0.0) {
            return Err(anyhow!("prune.radius: must be positive"));
        }
        if self.prune.bits != 4 && self.prune.bits != 8 {
            return Err(anyhow!("prune.bits: must be 4 or 8"));
        }
        for (i, a) in self.sweep_alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(anyhow!("sweep_alphas[{i}]: must be within [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn workload_spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            seed: self.seed,
            seq_len: self.workload.seq_len,
            head_dim: self.workload.head_dim,
            queries: self.workload.queries,
            generator: self.workload.generator.clone(),
        }
    }

    /// Generate the workload and derive the pruning configuration, whose
    /// score scale depends on the realized quantization scales.
    pub fn materialize(&self) -> anyhow::Result<(Workload, PruneConfig)> {
        let workload = bitprune::workload::generate(&self.workload_spec())?;
        let prune = self.prune_for(&workload, self.prune.alpha)?;
        Ok((workload, prune))
    }

    pub fn prune_for(&self, workload: &Workload, alpha: f64) -> anyhow::Result<PruneConfig> {
        Ok(PruneConfig::new(
            alpha,
            self.prune.radius,
            self.prune.bits,
            workload.score_scale(),
        )?)
    }
}
