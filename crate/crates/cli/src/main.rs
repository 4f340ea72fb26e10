//! Experiment runner: `run`, `sweep`, `ablate`, and `export-trace` over the
//! bit-serial sparse attention simulator.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 1 internal error.

mod config;
mod report;

use bitprune::reference::{accuracy_report, dense_attention, logits_row, AccuracyReport};
use bitprune::sim::{self, SimConfig};
use bitprune::workload::Workload;
use clap::{Parser, Subcommand, ValueEnum};
use config::RunConfig;
use rayon::prelude::*;
use report::{RunReport, SweepRow};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bitprune", about = "Bit-serial sparse attention experiments", version)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report encoding for `run`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write a report.
    Run,
    /// Run the alpha grid and write one CSV row per grid point.
    Sweep,
    /// Run the cumulative feature stack and write the stage table.
    Ablate,
    /// Re-run with event tracing and dump newline-delimited records.
    ExportTrace,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match RunConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("configuration error: {err:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match dispatch(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Validation failures surfaced from the library carry field
            // paths; everything else is an internal failure.
            let validation = err
                .downcast_ref::<bitprune::Error>()
                .is_some_and(|e| matches!(e, bitprune::Error::InvalidConfig { .. }));
            eprintln!("error: {err:#}");
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    match cli.command {
        Command::Run => cmd_run(cli, cfg),
        Command::Sweep => cmd_sweep(cli, cfg),
        Command::Ablate => cmd_ablate(cli, cfg),
        Command::ExportTrace => cmd_export_trace(cli, cfg),
    }
}

/// Dense double-precision oracle comparison for one simulated run.
fn accuracy_of(workload: &Workload, out: &sim::RunOutput) -> anyhow::Result<AccuracyReport> {
    let dense = dense_attention(&workload.q, &workload.k, &workload.v)?;
    // Pruning bounds are stated over the scores the filter actually saw:
    // integer scores dequantized through the shared scale.
    let (dq, dk, _) = workload.dequantized();
    let logits: Vec<Vec<f64>> = (0..dq.rows).map(|i| logits_row(dq.row(i), &dk)).collect();
    Ok(accuracy_report(&out.outputs, &dense, &logits, &out.traces)?)
}

fn simulate(cfg: &RunConfig, alpha: f64, sim_cfg: &SimConfig) -> anyhow::Result<RunReport> {
    let (workload, _) = cfg.materialize()?;
    let prune = cfg.prune_for(&workload, alpha)?;
    let out = sim::run(&workload, sim_cfg, &prune)?;
    let accuracy = accuracy_of(&workload, &out)?;
    Ok(RunReport {
        seed: cfg.seed,
        mode: format!("{:?}", sim_cfg.mode),
        metrics: out.metrics,
        accuracy,
    })
}

fn cmd_run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let mut report = simulate(cfg, cfg.prune.alpha, &cfg.sim)?;
    for _ in 1..cfg.repetitions {
        // Repetitions re-run the identical deterministic configuration; they
        // exist to let callers confirm reports are byte-stable.
        let again = simulate(cfg, cfg.prune.alpha, &cfg.sim)?;
        if again.to_json()? != report.to_json()? {
            anyhow::bail!("repetition produced a different report; determinism broken");
        }
        report = again;
    }
    let path = match cli.format {
        Format::Json => report::write_file(&cli.out, "report.json", &report.to_json()?)?,
        Format::Csv => report::write_file(&cli.out, "report.csv", &report.to_csv()?)?,
    };
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let grid: Vec<f64> = if cfg.sweep_alphas.is_empty() {
        (1..=10).map(|i| i as f64 / 10.0).collect()
    } else {
        cfg.sweep_alphas.clone()
    };
    // One worker per grid point; each owns its simulator instance, and the
    // assembled rows keep grid order.
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&alpha| {
            let report = simulate(cfg, alpha, &cfg.sim)?;
            Ok(SweepRow {
                alpha,
                retained_fraction: report.accuracy.retained_fraction,
                cycles: report.metrics.total_cycles,
                bits_fetched: report.metrics.bits_fetched,
                energy_pj: report.metrics.energy_pj,
                max_abs_error: report.accuracy.max_abs_error,
                pruned_weight_max: report.accuracy.pruned_weight_max,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let path = report::write_file(&cli.out, "sweep.csv", &report::sweep_csv(&rows)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ablate(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let (workload, _) = cfg.materialize()?;
    let prune = cfg.prune_for(&workload, cfg.prune.alpha)?;
    let stages = sim::ablate(&workload, &cfg.sim, &prune)?;
    let path = report::write_file(&cli.out, "ablate.csv", &report::ablate_csv(&stages)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_export_trace(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let (workload, _) = cfg.materialize()?;
    let prune = cfg.prune_for(&workload, cfg.prune.alpha)?;
    let out = sim::run_with_trace(&workload, &cfg.sim, &prune)?;
    let text = sim::to_jsonl(&out.events);
    let path = report::write_file(&cli.out, "trace.jsonl", &text)?;
    println!("wrote {} ({} events)", path.display(), out.events.len());
    Ok(())
}
