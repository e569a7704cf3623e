//! Grid sweeps: the cartesian product of knob axes, run in parallel, with
//! one CSV row per (cell, seed) pair.
//!
//! A sweep takes a base experiment config plus lists of values for any of
//! the sharing ratio, mode, update interval, target ratio, selection
//! strategy, and seed axes; an empty axis keeps the base value. Each cell
//! runs once per seed into `runs/<cell>/s<seed>/`, and `sweep.csv` collects
//! the headline numbers. A failing cell is recorded in its row and does not
//! abort the rest of the grid. Rows appear in deterministic grid order
//! regardless of the parallel schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::run::run_experiment;
use crate::selection::SelectionKind;

pub const SWEEP_FILE: &str = "sweep.csv";

/// A sweep: base config plus the axes to vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub sharing_ratios: Vec<f64>,
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub target_rs: Vec<f64>,
    #[serde(default)]
    pub selections: Vec<SelectionKind>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: SweepConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.base.validate()?;
        Ok(config)
    }

    /// Expands the grid into concrete experiment configs in nested-axis
    /// order: sharing ratio, mode, delta, target ratio, selection, seed.
    pub fn jobs(&self) -> Vec<(String, ExperimentConfig)> {
        let or_base = |axis: &[f64], base: f64| -> Vec<f64> {
            if axis.is_empty() { vec![base] } else { axis.to_vec() }
        };
        let ps = or_base(&self.sharing_ratios, self.base.sharing_ratio);
        let modes = if self.modes.is_empty() { vec![self.base.mode] } else { self.modes.clone() };
        let deltas = or_base(&self.deltas, self.base.delta);
        let targets = or_base(&self.target_rs, self.base.target_r);
        let selections = if self.selections.is_empty() {
            vec![self.base.selection]
        } else {
            self.selections.clone()
        };
        let seeds = if self.seeds.is_empty() { vec![self.base.seed] } else { self.seeds.clone() };

        let mut jobs = Vec::new();
        for &p in &ps {
            for &mode in &modes {
                for &delta in &deltas {
                    for &target_r in &targets {
                        for &selection in &selections {
                            let cell = format!("p{p}_{mode}_d{delta}_r{target_r}_{selection}");
                            for &seed in &seeds {
                                let mut config = self.base.clone();
                                config.sharing_ratio = p;
                                config.mode = mode;
                                config.delta = delta;
                                config.target_r = target_r;
                                config.selection = selection;
                                config.seed = seed;
                                jobs.push((cell.clone(), config));
                            }
                        }
                    }
                }
            }
        }
        jobs
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: String,
    pub mode: String,
    pub sharing_ratio: f64,
    pub delta: f64,
    pub target_r: f64,
    pub selection: String,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    /// Mean over tasks of the best validation F-score; empty for
    /// regression families and failed runs.
    pub mean_best_val_f: Option<f64>,
    pub mean_final_val_loss: Option<f64>,
    pub final_update_steps: Option<usize>,
    /// The error message for failed runs.
    pub error: String,
}

/// What a sweep produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: usize,
}

/// Runs the grid, writes `sweep.csv` under `out_dir`, and leaves each run's
/// artifacts in `runs/<cell>/s<seed>/`.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let jobs = config.jobs();
    let mut rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, (cell, job))| {
            let run_dir = out_dir.join("runs").join(cell).join(format!("s{}", job.seed));
            let mut row = SweepRow {
                cell: cell.clone(),
                mode: job.mode.to_string(),
                sharing_ratio: job.sharing_ratio,
                delta: job.delta,
                target_r: job.target_r,
                selection: job.selection.to_string(),
                seed: job.seed,
                status: "ok".into(),
                mean_best_val_f: None,
                mean_final_val_loss: None,
                final_update_steps: None,
                error: String::new(),
            };
            match run_experiment(job, &run_dir) {
                Ok(summary) => {
                    row.mean_best_val_f = summary.mean_best_val_f;
                    row.mean_final_val_loss = Some(summary.mean_final_val_loss);
                    row.final_update_steps = Some(summary.final_update_steps);
                }
                Err(e) => {
                    row.status = "failed".into();
                    row.error = e.to_string();
                    log::warn!("sweep cell {cell} seed {} failed: {e}", job.seed);
                }
            }
            (idx, row)
        })
        .collect();
    rows.sort_by_key(|(idx, _)| *idx);
    let rows: Vec<SweepRow> = rows.into_iter().map(|(_, row)| row).collect();

    let mut writer = csv::Writer::from_path(out_dir.join(SWEEP_FILE))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    let failures = rows.iter().filter(|r| r.status == "failed").count();
    Ok(SweepOutcome { rows, failures })
}

/// Reads a `sweep.csv` back into rows.
pub fn read_sweep_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::InitMode;
    use crate::synth::{TaskFamilySpec, TaskKind};

    fn tiny_base() -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Mr,
            sharing_ratio: 0.5,
            delta: 0.2,
            target_r: 1.0,
            selection: SelectionKind::Uniform,
            init: InitMode::Bernoulli,
            epochs: 1,
            batch_size: 16,
            learning_rate: 1e-3,
            trunk_widths: vec![8],
            seed: 3,
            task_family: TaskFamilySpec {
                num_tasks: 2,
                input_dim: 4,
                latent_dim: 4,
                correlation: 0.0,
                noise_std: 0.05,
                kind: TaskKind::Binary,
                n_train: 32,
                n_val: 16,
            },
        }
    }

    #[test]
    fn grid_expansion_is_the_cartesian_product_in_nested_order() {
        let sweep = SweepConfig {
            base: tiny_base(),
            sharing_ratios: vec![0.3, 0.7],
            modes: vec![Mode::Mr, Mode::Fixed],
            deltas: vec![],
            target_rs: vec![],
            selections: vec![],
            seeds: vec![1, 2, 3],
        };
        let jobs = sweep.jobs();
        assert_eq!(jobs.len(), 2 * 2 * 3);
        assert_eq!(jobs[0].0, "p0.3_mr_d0.2_r1_uniform");
        assert_eq!(jobs[0].1.seed, 1);
        assert_eq!(jobs[2].1.seed, 3);
        assert_eq!(jobs[3].0, "p0.3_fixed_d0.2_r1_uniform");
        assert_eq!(jobs[6].0, "p0.7_mr_d0.2_r1_uniform");
        // Empty axes fall back to the base values.
        assert!(jobs.iter().all(|(_, c)| c.delta == 0.2 && c.target_r == 1.0));
    }

    #[test]
    fn sweep_runs_cells_and_records_failures_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = tiny_base();
        base.task_family.n_train = 32;
        let sweep = SweepConfig {
            base,
            sharing_ratios: vec![0.5, 2.0], // 2.0 is invalid: that cell fails
            modes: vec![],
            deltas: vec![],
            target_rs: vec![],
            selections: vec![],
            seeds: vec![1, 2],
        };
        let outcome = run_sweep(&sweep, dir.path()).unwrap();
        assert_eq!(outcome.rows.len(), 4);
        assert_eq!(outcome.failures, 2);
        let ok_rows: Vec<_> = outcome.rows.iter().filter(|r| r.status == "ok").collect();
        assert_eq!(ok_rows.len(), 2);
        assert!(ok_rows.iter().all(|r| r.sharing_ratio == 0.5));
        assert!(ok_rows.iter().all(|r| r.mean_best_val_f.is_some()));
        let failed: Vec<_> = outcome.rows.iter().filter(|r| r.status == "failed").collect();
        assert!(failed.iter().all(|r| r.error.contains("sharing ratio")));

        // Artifacts land per cell and seed, and the CSV parses back.
        assert!(dir
            .path()
            .join("runs/p0.5_mr_d0.2_r1_uniform/s1/metrics.csv")
            .exists());
        let rows = read_sweep_rows(&dir.path().join(SWEEP_FILE)).unwrap();
        assert_eq!(rows, outcome.rows);
    }

    #[test]
    fn sweep_rows_come_back_in_grid_order_despite_parallelism() {
        let dir = tempfile::tempdir().unwrap();
        let sweep = SweepConfig {
            base: tiny_base(),
            sharing_ratios: vec![0.3, 0.5, 0.7],
            modes: vec![],
            deltas: vec![],
            target_rs: vec![],
            selections: vec![],
            seeds: vec![1, 2],
        };
        let outcome = run_sweep(&sweep, dir.path()).unwrap();
        let keys: Vec<(f64, u64)> =
            outcome.rows.iter().map(|r| (r.sharing_ratio, r.seed)).collect();
        assert_eq!(
            keys,
            vec![(0.3, 1), (0.3, 2), (0.5, 1), (0.5, 2), (0.7, 1), (0.7, 2)]
        );
    }
}
