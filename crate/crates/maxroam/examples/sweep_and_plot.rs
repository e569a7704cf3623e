//! Grid sweeps and SVG charts: run a small factorial experiment and render
//! every built-in plot from its `sweep.csv`.
//!
//! A sweep crosses a base configuration with any of six axes (mode, sharing
//! ratio, update interval, target update ratio, selection rule, seed); each
//! cell trains independently and lands in one CSV row. The plot renderer
//! only needs that CSV, so charts can be (re)built long after the runs.
//!
//! Run with: `cargo run --example sweep_and_plot`

use std::collections::BTreeMap;

use maxroam::harness::{read_sweep_rows, render_all, render_plot, run_sweep, PlotKind};
use maxroam::partition::InitMode;
use maxroam::synth::{TaskFamilySpec, TaskKind};
use maxroam::{ExperimentConfig, Mode, Result, SelectionKind, SweepConfig};

fn main() -> Result<()> {
    // A deliberately small base so the whole grid runs in seconds.
    let base = ExperimentConfig {
        mode: Mode::Mr,
        sharing_ratio: 0.5,
        delta: 0.2,
        target_r: 1.0,
        selection: SelectionKind::Uniform,
        init: InitMode::Bernoulli,
        epochs: 6,
        batch_size: 32,
        learning_rate: 3e-3,
        trunk_widths: vec![16],
        seed: 0,
        task_family: TaskFamilySpec {
            num_tasks: 3,
            input_dim: 8,
            latent_dim: 6,
            correlation: 0.0,
            noise_std: 0.2,
            kind: TaskKind::Binary,
            n_train: 96,
            n_val: 128,
        },
    };
    let sweep = SweepConfig {
        base,
        modes: vec![Mode::Mr, Mode::Fixed],
        sharing_ratios: vec![0.3, 0.7],
        deltas: vec![0.2, 0.5],
        target_rs: vec![0.5, 1.0],
        selections: vec![SelectionKind::Uniform, SelectionKind::Cosine],
        seeds: vec![1, 2],
    };

    let dir = tempfile::tempdir()?;
    let outcome = run_sweep(&sweep, dir.path())?;
    println!(
        "swept {} cells ({} failed); rows in {}",
        outcome.rows.len(),
        outcome.failures,
        dir.path().join("sweep.csv").display()
    );

    // The CSV is the interchange format: read it back and aggregate by
    // (mode, sharing ratio) across everything else.
    let rows = read_sweep_rows(&dir.path().join("sweep.csv"))?;
    assert_eq!(rows.len(), outcome.rows.len());
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        if let Some(f) = row.mean_best_val_f {
            cells
                .entry((row.mode.clone(), format!("p={}", row.sharing_ratio)))
                .or_default()
                .push(f);
        }
    }
    println!("\nmean best validation F-score by (mode, sharing ratio):");
    for ((mode, p), vals) in &cells {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("  {mode:<6} {p:<6} {mean:.4}  ({} runs)", vals.len());
    }

    // One chart on demand...
    let svg = render_plot(PlotKind::BarsVsP, &dir.path().join("sweep.csv"), dir.path())?;
    println!("\nrendered {}", svg.display());

    // ...or every kind at once.
    let plot_dir = dir.path().join("plots");
    for path in render_all(&dir.path().join("sweep.csv"), &plot_dir)? {
        let text = std::fs::read_to_string(&path)?;
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        println!("rendered {} ({} bytes)", path.display(), text.len());
    }
    println!("\nplot kinds: {:?}", PlotKind::ALL);
    Ok(())
}
