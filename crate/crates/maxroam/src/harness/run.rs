//! Single-experiment driver: data, network, partitions, training loop,
//! metrics, and artifacts.
//!
//! A run is a pure function of its [`ExperimentConfig`] (including the
//! seed): the master seed fans out into one independent RNG stream per
//! randomness consumer — data, weights, partition draw, swap selection,
//! minibatch shuffling — so changing, say, the number of epochs never
//! perturbs the dataset. Two runs with the same config produce
//! byte-identical `metrics.csv` files.
//!
//! Within an iteration, due partition update steps fire *before* the
//! optimizer step, so a metrics row at epoch `E` reflects the plan clock
//! `floor(E / delta)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::metrics::{f_score, MetricsRecord, MetricsWriter};
use crate::net::{Adam, Gradients, LossKind, MaskedNetwork};
use crate::partition::{plan_duration, PartitionSet, RoamingSchedule};
use crate::selection::{SelectionKind, SelectionStrategy};
use crate::synth::{self, Split, TaskKind};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARTITION_FILE: &str = "partition.json";

/// RNG stream ids hung off the master seed. Each consumer draws only from
/// its own stream, so consumers cannot perturb one another.
const STREAM_DATA: u64 = 1;
const STREAM_WEIGHTS: u64 = 2;
const STREAM_PARTITION: u64 = 3;
const STREAM_SELECTION: u64 = 4;
const STREAM_SHUFFLE: u64 = 5;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Where one run ended up, per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: usize,
    /// Epoch picked by validation: highest F-score for binary tasks
    /// (earliest on ties), lowest loss for regression.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_f: Option<f64>,
    pub final_val_loss: f64,
    pub final_val_f: Option<f64>,
}

/// Everything `summary.json` holds about a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub effective_sharing_ratio: f64,
    pub effective_target_r: f64,
    pub iterations_per_epoch: usize,
    /// Epochs until the update plan completes, `0` when nothing roams.
    pub plan_duration_epochs: f64,
    pub final_update_steps: usize,
    pub per_task: Vec<TaskSummary>,
    /// Mean over tasks of `best_val_f`; absent for regression families.
    pub mean_best_val_f: Option<f64>,
    pub mean_final_val_loss: f64,
    /// Informational only; everything else in the artifacts is
    /// deterministic in the config.
    pub wall_clock_seconds: f64,
}

/// One network being trained: the whole task set for shared regimes, a
/// single task for [`Mode::Stl`].
struct TrainUnit {
    net: MaskedNetwork,
    parts: PartitionSet,
    opt: Adam,
    /// Global task ids served by this unit; a task's head index inside the
    /// unit is its position here.
    tasks: Vec<usize>,
}

/// Update steps actually applied to partitions so far: the plan clock of
/// the layer with the longest plan. Zero for regimes whose partitions never
/// move (fixed, and anything complete at initialization).
fn applied_update_steps(units: &[TrainUnit]) -> usize {
    units
        .iter()
        .flat_map(|u| u.parts.layers().iter().map(|l| l.steps_done()))
        .max()
        .unwrap_or(0)
}

/// Runs one experiment, writing `metrics.csv`, `summary.json`, and (for
/// shared-trunk regimes) `partition.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let seed = config.seed;
    let (p_eff, target_r_eff) = config.effective_knobs();
    let num_tasks = config.task_family.num_tasks;
    let num_layers = config.trunk_widths.len();
    let loss_kind = match config.task_family.kind {
        TaskKind::Binary => LossKind::Logistic,
        TaskKind::Regression => LossKind::Squared,
    };

    let dataset = synth::generate(&config.task_family, &mut stream_rng(seed, STREAM_DATA))?;

    let mut weights_rng = stream_rng(seed, STREAM_WEIGHTS);
    let mut partition_rng = stream_rng(seed, STREAM_PARTITION);
    let mut units: Vec<TrainUnit> = Vec::new();
    if config.mode == Mode::Stl {
        for task in 0..num_tasks {
            let net = MaskedNetwork::init(
                config.task_family.input_dim,
                &config.trunk_widths,
                1,
                &mut weights_rng,
            )?;
            let parts = PartitionSet::init(
                &config.trunk_widths,
                1,
                p_eff,
                config.init,
                &mut partition_rng,
            )?;
            let opt = Adam::new(config.learning_rate, net.param_count());
            units.push(TrainUnit {
                net,
                parts,
                opt,
                tasks: vec![task],
            });
        }
    } else {
        let net = MaskedNetwork::init(
            config.task_family.input_dim,
            &config.trunk_widths,
            num_tasks,
            &mut weights_rng,
        )?;
        let parts = PartitionSet::init(
            &config.trunk_widths,
            num_tasks,
            p_eff,
            config.init,
            &mut partition_rng,
        )?;
        let opt = Adam::new(config.learning_rate, net.param_count());
        units.push(TrainUnit {
            net,
            parts,
            opt,
            tasks: (0..num_tasks).collect(),
        });
    }
    for unit in &units {
        unit.net.check_shapes(&unit.parts)?;
    }
    // task -> (unit index, head index within the unit)
    let task_location: Vec<(usize, usize)> = (0..num_tasks)
        .map(|task| {
            units
                .iter()
                .enumerate()
                .find_map(|(u, unit)| {
                    unit.tasks.iter().position(|&t| t == task).map(|h| (u, h))
                })
                .expect("every task has a unit")
        })
        .collect();

    let iterations_per_epoch = dataset.train.len().div_ceil(config.batch_size);
    let mut schedule = RoamingSchedule::new(config.delta, target_r_eff, iterations_per_epoch)?;
    let mut strategy = match config.selection {
        SelectionKind::Uniform => SelectionStrategy::uniform(stream_rng(seed, STREAM_SELECTION)),
        SelectionKind::Cosine => SelectionStrategy::cosine(),
    };
    let mut shuffle_rng = stream_rng(seed, STREAM_SHUFFLE);

    let plan_duration_epochs = if config.mode == Mode::Stl {
        0.0
    } else {
        plan_duration(&units[0].parts, p_eff, config.delta)
    };

    let mut writer = MetricsWriter::create(&out_dir.join(METRICS_FILE), num_layers, num_tasks)?;
    let mut history: Vec<MetricsRecord> = Vec::with_capacity(config.epochs);
    let mut completed_iterations = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_train_loss = vec![0.0; num_tasks];
        let mut batches = 0usize;

        for chunk in order.chunks(config.batch_size) {
            for _ in 0..schedule.due_steps(completed_iterations) {
                for unit in &mut units {
                    for d in 0..unit.parts.num_layers() {
                        if !schedule.layer_wants_update(unit.parts.layer(d), p_eff) {
                            continue;
                        }
                        let vectors = match config.selection {
                            SelectionKind::Cosine => Some(unit.net.layers[d].channel_vectors()),
                            SelectionKind::Uniform => None,
                        };
                        unit.parts
                            .layer_mut(d)
                            .apply_update_step(&mut strategy, vectors.as_deref())?;
                    }
                }
                schedule.advance();
            }

            let xs: Vec<Vec<f64>> =
                chunk.iter().map(|&i| dataset.train.xs[i].clone()).collect();
            for unit in &mut units {
                let mut total = Gradients::zeros_like(&unit.net);
                for (head, &task) in unit.tasks.iter().enumerate() {
                    let ys: Vec<f64> =
                        chunk.iter().map(|&i| dataset.train.ys[task][i]).collect();
                    let (loss, grads) =
                        unit.net.batch_gradients(head, &xs, &ys, loss_kind, &unit.parts);
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            task,
                            iteration: completed_iterations,
                            value: loss,
                        });
                    }
                    epoch_train_loss[task] += loss;
                    total.add(&grads);
                }
                unit.net.apply_gradients(&mut unit.opt, &total);
            }
            completed_iterations += 1;
            batches += 1;
        }

        for unit in &units {
            unit.parts.check_invariants()?;
        }

        let mut val_loss = Vec::with_capacity(num_tasks);
        let mut val_f = Vec::with_capacity(num_tasks);
        for task in 0..num_tasks {
            let (u, head) = task_location[task];
            let (loss, f) = evaluate(
                &units[u].net,
                head,
                &units[u].parts,
                &dataset.val,
                task,
                loss_kind,
            );
            val_loss.push(loss);
            val_f.push(f);
        }

        let (mean_overlap, unassigned, r_per_layer) = if config.mode == Mode::Stl {
            // No shared trunk: overlap and roaming progress do not apply.
            (0.0, 0, vec![1.0; num_layers])
        } else {
            let parts = &units[0].parts;
            (
                parts.mean_overlap_fraction(),
                parts.unassigned_params(),
                (0..num_layers)
                    .map(|d| parts.layer(d).update_ratio(p_eff))
                    .collect(),
            )
        };

        let record = MetricsRecord {
            epoch,
            update_steps: applied_update_steps(&units),
            mean_overlap,
            unassigned_params: unassigned,
            r_per_layer,
            train_loss: epoch_train_loss
                .iter()
                .map(|&l| l / batches as f64)
                .collect(),
            val_loss,
            val_f,
            seed,
        };
        writer.write(&record)?;
        history.push(record);
    }
    writer.flush()?;

    let per_task = summarize_tasks(&history, num_tasks);
    let mean_best_val_f = mean_of_options(per_task.iter().map(|t| t.best_val_f));
    let mean_final_val_loss = per_task.iter().map(|t| t.final_val_loss).sum::<f64>()
        / num_tasks as f64;
    let summary = RunSummary {
        config: config.clone(),
        effective_sharing_ratio: p_eff,
        effective_target_r: target_r_eff,
        iterations_per_epoch,
        plan_duration_epochs,
        final_update_steps: applied_update_steps(&units),
        per_task,
        mean_best_val_f,
        mean_final_val_loss,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };

    let mut summary_file = std::fs::File::create(out_dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(&mut summary_file, &summary)?;
    summary_file.write_all(b"\n")?;

    if config.mode != Mode::Stl {
        let mut snapshot_file = std::fs::File::create(out_dir.join(PARTITION_FILE))?;
        serde_json::to_writer_pretty(&mut snapshot_file, &units[0].parts.snapshot())?;
        snapshot_file.write_all(b"\n")?;
    }
    Ok(summary)
}

/// Validation loss and, for binary tasks, the F-score of `output > 0`
/// predictions.
fn evaluate(
    net: &MaskedNetwork,
    head: usize,
    parts: &PartitionSet,
    split: &Split,
    task: usize,
    loss_kind: LossKind,
) -> (f64, Option<f64>) {
    let outputs: Vec<f64> = split
        .xs
        .iter()
        .map(|x| net.output(x, head, parts))
        .collect();
    let labels = &split.ys[task];
    let loss = outputs
        .iter()
        .zip(labels)
        .map(|(&z, &y)| loss_kind.loss(z, y))
        .sum::<f64>()
        / outputs.len() as f64;
    let f = match loss_kind {
        LossKind::Logistic => {
            let preds: Vec<bool> = outputs.iter().map(|&z| z > 0.0).collect();
            Some(f_score(&preds, labels))
        }
        LossKind::Squared => None,
    };
    (loss, f)
}

fn summarize_tasks(history: &[MetricsRecord], num_tasks: usize) -> Vec<TaskSummary> {
    (0..num_tasks)
        .map(|task| {
            let best = history
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| match (a.val_f[task], b.val_f[task]) {
                    // Binary: maximize F, earliest epoch on ties.
                    (Some(fa), Some(fb)) => fa
                        .partial_cmp(&fb)
                        .unwrap()
                        .then(ib.cmp(ia)),
                    // Regression: minimize loss, earliest epoch on ties.
                    _ => b.val_loss[task]
                        .partial_cmp(&a.val_loss[task])
                        .unwrap()
                        .then(ib.cmp(ia)),
                })
                .map(|(i, _)| i)
                .expect("at least one epoch");
            let last = history.last().expect("at least one epoch");
            TaskSummary {
                task,
                best_epoch: history[best].epoch,
                best_val_loss: history[best].val_loss[task],
                best_val_f: history[best].val_f[task],
                final_val_loss: last.val_loss[task],
                final_val_f: last.val_f[task],
            }
        })
        .collect()
}

fn mean_of_options(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v?;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Reads a `summary.json` back.
pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
