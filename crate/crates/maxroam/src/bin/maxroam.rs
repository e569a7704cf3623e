//! Thin command-line front end over the `maxroam` library.
//!
//! Four subcommands mirror the library's four entry points:
//!
//! * `run`    — one experiment from a JSON config; writes `metrics.csv`,
//!   `summary.json`, and (for partitioned modes) `partition.json`.
//! * `sweep`  — a grid of experiments from a JSON sweep config; writes
//!   `sweep.csv` plus one run directory per cell and seed.
//! * `verify` — the statistical verification suite; writes `report.json`.
//! * `plot`   — SVG charts from a `sweep.csv`.
//!
//! Exit code 0 means success (and, for `verify`, that every check passed);
//! any failure exits 1 with the error on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maxroam::harness::plot::{render_all, render_plot, PlotKind};
use maxroam::harness::sweep::{run_sweep, SweepConfig, SWEEP_FILE};
use maxroam::harness::verify::{run_verification, McRegime, REPORT_FILE};
use maxroam::harness::{run_experiment, ExperimentConfig};
use maxroam::Result;

#[derive(Parser)]
#[command(
    name = "maxroam",
    version,
    about = "Roaming task-partition experiments: train, sweep, verify, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run(RunArgs),
    /// Run a grid of experiments from a JSON sweep config.
    Sweep(SweepArgs),
    /// Run the statistical verification suite.
    Verify(VerifyArgs),
    /// Render SVG charts from a sweep CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for metrics.csv / summary.json / partition.json.
    #[arg(long, default_value = "out/run")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (JSON): a base experiment config plus grid axes.
    #[arg(long)]
    config: PathBuf,
    /// Override the base config's seed (applies when the sweep lists none).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for sweep.csv and the per-cell run directories.
    #[arg(long, default_value = "out/sweep")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Monte Carlo runs per check (minimum 1000).
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    /// Master seed for every check.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Parameters per simulated layer (S).
    #[arg(long, default_value_t = 20)]
    layer_size: usize,
    /// Tasks sharing the simulated layer (T).
    #[arg(long, default_value_t = 3)]
    tasks: usize,
    /// Sharing ratios to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5, 0.7])]
    sharing_ratios: Vec<f64>,
    /// Directory for report.json and the replay runs.
    #[arg(long, default_value = "out/verify")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep CSV produced by the `sweep` subcommand.
    #[arg(long)]
    sweep: PathBuf,
    /// Which chart to render; omit to render every kind.
    #[arg(long)]
    kind: Option<PlotKind>,
    /// Directory for the SVG files.
    #[arg(long, default_value = "out/plots")]
    out_dir: PathBuf,
}

/// Returns `Ok(true)` when the command succeeded outright and `Ok(false)`
/// when it ran to completion but reported failures (failed verification
/// checks, failed sweep cells).
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let mut config = ExperimentConfig::from_json_file(&args.config)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let summary = run_experiment(&config, &args.out_dir)?;
            log::info!(
                "run finished: {} update steps, mean final val loss {:.6}",
                summary.final_update_steps,
                summary.mean_final_val_loss
            );
            println!(
                "wrote {} and {}",
                args.out_dir.join("metrics.csv").display(),
                args.out_dir.join("summary.json").display()
            );
            Ok(true)
        }
        Command::Sweep(args) => {
            let mut config = SweepConfig::from_json_file(&args.config)?;
            if let Some(seed) = args.seed {
                config.base.seed = seed;
            }
            let outcome = run_sweep(&config, &args.out_dir)?;
            println!(
                "wrote {} ({} rows, {} failed)",
                args.out_dir.join(SWEEP_FILE).display(),
                outcome.rows.len(),
                outcome.failures
            );
            for row in outcome.rows.iter().filter(|r| r.status == "failed") {
                eprintln!("cell {} seed {} failed: {}", row.cell, row.seed, row.error);
            }
            Ok(outcome.failures == 0)
        }
        Command::Verify(args) => {
            let regime = McRegime {
                layer_size: args.layer_size,
                tasks: args.tasks,
                sharing_ratios: args.sharing_ratios,
            };
            let report = run_verification(&regime, args.runs, args.seed, &args.out_dir)?;
            for check in &report.checks {
                println!(
                    "{}: {} (statistic {:.6} vs threshold {:.6})",
                    check.name,
                    if check.pass { "PASS" } else { "FAIL" },
                    check.statistic,
                    check.threshold
                );
            }
            println!(
                "wrote {}; overall: {}",
                args.out_dir.join(REPORT_FILE).display(),
                if report.all_pass { "PASS" } else { "FAIL" }
            );
            Ok(report.all_pass)
        }
        Command::Plot(args) => {
            let written = match args.kind {
                Some(kind) => vec![render_plot(kind, &args.sweep, &args.out_dir)?],
                None => render_all(&args.sweep, &args.out_dir)?,
            };
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
