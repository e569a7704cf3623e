//! Binary task-partition bookkeeping and the bounded update plan.
//!
//! Each maskable layer owns a [`LayerPartition`]: a T-column binary matrix
//! assigning every one of the layer's S parameters (channels) to the tasks
//! allowed to train it, plus per-task visited sets recording which parameters
//! a task has ever used. An update step swaps, per task, one currently-held
//! parameter for one never-visited parameter, so the partition size per task
//! stays constant while the visited sets grow by one until they cover the
//! layer. [`RoamingSchedule`] decides when steps fire during training;
//! [`PartitionSet`] stacks one partition per network layer.
//!
//! The bookkeeping guarantees, structurally:
//!
//! * the active set of a task is always a subset of its visited set;
//! * the active set size never changes after initialization;
//! * visited sets are monotone and grow by exactly one per applied swap;
//! * a layer reports `Complete` once every task has visited every parameter,
//!   after exactly `S - |visited at init|` swaps per task.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::SelectionStrategy;

/// How the initial assignment matrix is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every bit i.i.d. Bernoulli(p); parameters left unassigned are then
    /// given to one uniformly sampled task so the whole layer stays in use.
    Bernoulli,
    /// Every task gets exactly `round(p * S)` parameters, sampled uniformly
    /// without replacement. No coverage repair is applied afterwards: the
    /// repair would inflate the marginal assignment probability above `p`
    /// and the statistical checks in [`crate::harness::verify`] rely on the
    /// marginal being exactly `p`. A parameter can therefore start unused
    /// in this mode.
    ExactCount,
}

/// Result of one per-task swap attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// The task released `removed` and claimed `added`.
    Swapped { removed: usize, added: usize },
    /// The task has visited every parameter; nothing changed.
    Complete,
}

impl UpdateOutcome {
    pub fn is_swap(&self) -> bool {
        matches!(self, UpdateOutcome::Swapped { .. })
    }
}

/// One layer's binary task-assignment matrix plus roaming state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPartition {
    num_params: usize,
    num_tasks: usize,
    /// `mask[t][i]`: parameter `i` currently assigned to task `t`.
    mask: Vec<Vec<bool>>,
    /// `visited[t][i]`: parameter `i` ever assigned to task `t`.
    visited: Vec<Vec<bool>>,
    /// Active-set size per task, frozen at initialization.
    active_sizes: Vec<usize>,
    /// Update steps applied to this layer. One step = one swap attempt for
    /// every task; the counter advances only when at least one task swapped.
    steps_done: usize,
}

impl LayerPartition {
    /// Draws a fresh partition.
    ///
    /// Bernoulli mode consumes one uniform draw per (task, parameter) bit in
    /// task-major order, then one task draw per uncovered parameter in index
    /// order; exact-count mode consumes one index sample per task in task
    /// order. Identical seeds give identical partitions.
    pub fn init(
        num_params: usize,
        num_tasks: usize,
        sharing_ratio: f64,
        mode: InitMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_params == 0 || num_tasks == 0 {
            return Err(Error::DegenerateLayer {
                s: num_params,
                t: num_tasks,
            });
        }
        if !(0.0..=1.0).contains(&sharing_ratio) {
            return Err(Error::SharingRatioOutOfRange { p: sharing_ratio });
        }
        if sharing_ratio == 0.0 && num_tasks > num_params {
            return Err(Error::InfeasibleDisjoint {
                s: num_params,
                t: num_tasks,
            });
        }

        let mut mask = vec![vec![false; num_params]; num_tasks];
        match mode {
            InitMode::Bernoulli => {
                for column in mask.iter_mut() {
                    for bit in column.iter_mut() {
                        *bit = rng.gen::<f64>() < sharing_ratio;
                    }
                }
                // Parameters no task picked are attributed to one uniformly
                // sampled task.
                for i in 0..num_params {
                    if !mask.iter().any(|column| column[i]) {
                        let t = rng.gen_range(0..num_tasks);
                        mask[t][i] = true;
                    }
                }
            }
            InitMode::ExactCount => {
                let per_task = (sharing_ratio * num_params as f64).round() as usize;
                for column in mask.iter_mut() {
                    for idx in rand::seq::index::sample(rng, num_params, per_task) {
                        column[idx] = true;
                    }
                }
            }
        }

        let visited = mask.clone();
        let active_sizes = mask.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
        Ok(LayerPartition {
            num_params,
            num_tasks,
            mask,
            visited,
            active_sizes,
            steps_done: 0,
        })
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// The task's current assignment column.
    pub fn task_mask(&self, task: usize) -> &[bool] {
        &self.mask[task]
    }

    /// Ascending indices of the parameters task `task` currently uses.
    pub fn active_set(&self, task: usize) -> Vec<usize> {
        (0..self.num_params).filter(|&i| self.mask[task][i]).collect()
    }

    /// Ascending indices of the parameters task `task` has ever used.
    pub fn visited_set(&self, task: usize) -> Vec<usize> {
        (0..self.num_params).filter(|&i| self.visited[task][i]).collect()
    }

    pub fn active_count(&self, task: usize) -> usize {
        self.mask[task].iter().filter(|&&b| b).count()
    }

    pub fn visited_count(&self, task: usize) -> usize {
        self.visited[task].iter().filter(|&&b| b).count()
    }

    /// True once every task has visited every parameter.
    pub fn is_complete(&self) -> bool {
        (0..self.num_tasks).all(|t| self.visited_count(t) == self.num_params)
    }

    /// One swap for one task, following the update rules: clear a bit drawn
    /// from the active set, set a bit drawn from the never-visited set, leave
    /// everything else untouched. Returns `Complete` without touching state
    /// when the task has no unvisited parameters left.
    ///
    /// This advances the task, not the layer clock; use
    /// [`apply_update_step`](Self::apply_update_step) for the layer-level
    /// step that `steps_done` counts.
    pub fn apply_task_update(
        &mut self,
        task: usize,
        strategy: &mut SelectionStrategy,
        weights: Option<&[Vec<f64>]>,
    ) -> Result<UpdateOutcome> {
        if task >= self.num_tasks {
            return Err(Error::TaskOutOfRange {
                task,
                t: self.num_tasks,
            });
        }
        let candidates: Vec<usize> = (0..self.num_params)
            .filter(|&i| !self.visited[task][i])
            .collect();
        if candidates.is_empty() {
            return Ok(UpdateOutcome::Complete);
        }
        let active = self.active_set(task);
        if active.is_empty() {
            return Err(Error::EmptyActiveSet { task });
        }

        let (removed, added) = strategy.select_pair(&active, &candidates, weights)?;
        debug_assert!(self.mask[task][removed]);
        debug_assert!(!self.visited[task][added]);
        self.mask[task][removed] = false;
        self.mask[task][added] = true;
        self.visited[task][added] = true;
        Ok(UpdateOutcome::Swapped { removed, added })
    }

    /// One update step for the layer: one swap attempt per task, in task
    /// order. The step counter advances when at least one task swapped; a
    /// fully complete layer returns all-`Complete` and stays untouched.
    pub fn apply_update_step(
        &mut self,
        strategy: &mut SelectionStrategy,
        weights: Option<&[Vec<f64>]>,
    ) -> Result<Vec<UpdateOutcome>> {
        let mut outcomes = Vec::with_capacity(self.num_tasks);
        for task in 0..self.num_tasks {
            outcomes.push(self.apply_task_update(task, strategy, weights)?);
        }
        if outcomes.iter().any(UpdateOutcome::is_swap) {
            self.steps_done += 1;
        }
        Ok(outcomes)
    }

    /// Completion rate of this layer's update plan:
    /// `min(1, steps_done / ((1 - p) * S))`, and 1 for `p = 1` where no
    /// update is possible. A layer whose every task has visited every
    /// parameter reports 1 outright: under a Bernoulli initialization a
    /// task holding more than `p * S` parameters finishes its plan in fewer
    /// steps than the nominal denominator assumes.
    pub fn update_ratio(&self, sharing_ratio: f64) -> f64 {
        if self.is_complete() {
            return 1.0;
        }
        update_ratio_for(self.steps_done, self.num_params, sharing_ratio)
    }

    /// Symmetric T x T matrix of pairwise active-set intersections; the
    /// diagonal holds the active-set sizes.
    pub fn overlap_matrix(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; self.num_tasks]; self.num_tasks];
        for (s, row) in counts.iter_mut().enumerate() {
            for (t, entry) in row.iter_mut().enumerate() {
                *entry = (0..self.num_params)
                    .filter(|&i| self.mask[s][i] && self.mask[t][i])
                    .count();
            }
        }
        counts
    }

    /// Number of parameters currently assigned to no task. Swaps may create
    /// such parameters transiently; they are counted, never reassigned,
    /// because reassignment would change some task's partition size.
    pub fn unassigned_params(&self) -> usize {
        (0..self.num_params)
            .filter(|&i| !self.mask.iter().any(|column| column[i]))
            .count()
    }

    /// Checks the stateful invariants and names the first violation found.
    pub fn check_invariants(&self) -> Result<()> {
        for t in 0..self.num_tasks {
            for i in 0..self.num_params {
                if self.mask[t][i] && !self.visited[t][i] {
                    return Err(Error::InvariantViolation(format!(
                        "task {t} uses parameter {i} that is not in its visited set"
                    )));
                }
            }
            let active = self.active_count(t);
            if active != self.active_sizes[t] {
                return Err(Error::InvariantViolation(format!(
                    "task {t} active-set size changed: {} at init, {active} now",
                    self.active_sizes[t]
                )));
            }
        }
        Ok(())
    }

    /// Serializable view of the partition state.
    pub fn snapshot(&self, layer: usize) -> LayerSnapshot {
        LayerSnapshot {
            layer,
            s: self.num_params,
            t: self.num_tasks,
            mask: (0..self.num_tasks).map(|t| self.active_set(t)).collect(),
            visited: (0..self.num_tasks).map(|t| self.visited_set(t)).collect(),
            steps_done: self.steps_done,
        }
    }

    /// Rebuilds a partition from a snapshot, validating index ranges and the
    /// active-subset-of-visited containment.
    pub fn from_snapshot(snap: &LayerSnapshot) -> Result<Self> {
        if snap.s == 0 || snap.t == 0 {
            return Err(Error::BadSnapshot(format!("S = {}, T = {}", snap.s, snap.t)));
        }
        if snap.mask.len() != snap.t || snap.visited.len() != snap.t {
            return Err(Error::BadSnapshot(format!(
                "expected {} task columns, snapshot has {} mask / {} visited",
                snap.t,
                snap.mask.len(),
                snap.visited.len()
            )));
        }
        let mut mask = vec![vec![false; snap.s]; snap.t];
        let mut visited = vec![vec![false; snap.s]; snap.t];
        for t in 0..snap.t {
            for &i in &snap.visited[t] {
                if i >= snap.s {
                    return Err(Error::BadSnapshot(format!(
                        "visited index {i} out of range for S = {}",
                        snap.s
                    )));
                }
                visited[t][i] = true;
            }
            for &i in &snap.mask[t] {
                if i >= snap.s {
                    return Err(Error::BadSnapshot(format!(
                        "mask index {i} out of range for S = {}",
                        snap.s
                    )));
                }
                if !visited[t][i] {
                    return Err(Error::BadSnapshot(format!(
                        "task {t} mask contains parameter {i} missing from its visited set"
                    )));
                }
                mask[t][i] = true;
            }
        }
        let active_sizes = mask.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
        Ok(LayerPartition {
            num_params: snap.s,
            num_tasks: snap.t,
            mask,
            visited,
            active_sizes,
            steps_done: snap.steps_done,
        })
    }
}

/// `min(1, c / ((1 - p) * S))`; 1 by convention at `p = 1`.
pub fn update_ratio_for(steps_done: usize, num_params: usize, sharing_ratio: f64) -> f64 {
    if sharing_ratio >= 1.0 {
        return 1.0;
    }
    let denom = (1.0 - sharing_ratio) * num_params as f64;
    (steps_done as f64 / denom).min(1.0)
}

/// Probability that a parameter has been visited by a task when the plan is
/// at update ratio `r`: `p + (1 - p) * r`.
pub fn visit_probability(sharing_ratio: f64, update_ratio: f64) -> f64 {
    sharing_ratio + (1.0 - sharing_ratio) * update_ratio
}

/// One partition per maskable network layer, all sharing the same task count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSet {
    layers: Vec<LayerPartition>,
}

impl PartitionSet {
    /// Initializes one partition per layer width, consuming `rng` layer by
    /// layer in order.
    pub fn init(
        layer_widths: &[usize],
        num_tasks: usize,
        sharing_ratio: f64,
        mode: InitMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let layers = layer_widths
            .iter()
            .map(|&s| LayerPartition::init(s, num_tasks, sharing_ratio, mode, rng))
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(Error::Config("a partition set needs at least one layer".into()));
        }
        Ok(PartitionSet { layers })
    }

    pub fn from_layers(layers: Vec<LayerPartition>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a partition set needs at least one layer".into()));
        }
        let t = layers[0].num_tasks();
        if layers.iter().any(|l| l.num_tasks() != t) {
            return Err(Error::Config("all layers must share the same task count".into()));
        }
        Ok(PartitionSet { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.layers[0].num_tasks()
    }

    pub fn layer(&self, d: usize) -> &LayerPartition {
        &self.layers[d]
    }

    pub fn layer_mut(&mut self, d: usize) -> &mut LayerPartition {
        &mut self.layers[d]
    }

    pub fn layers(&self) -> &[LayerPartition] {
        &self.layers
    }

    /// Largest layer size in the stack.
    pub fn max_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).max().unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.layers.iter().all(LayerPartition::is_complete)
    }

    /// Mean of `|A_s ∩ A_t| / S` over all layers and unordered task pairs;
    /// 0 when there is a single task.
    pub fn mean_overlap_fraction(&self) -> f64 {
        let t = self.num_tasks();
        if t < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for layer in &self.layers {
            let overlap = layer.overlap_matrix();
            for a in 0..t {
                for b in (a + 1)..t {
                    sum += overlap[a][b] as f64 / layer.num_params() as f64;
                    pairs += 1;
                }
            }
        }
        sum / pairs as f64
    }

    /// Total count of parameters currently assigned to no task.
    pub fn unassigned_params(&self) -> usize {
        self.layers.iter().map(LayerPartition::unassigned_params).sum()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for layer in &self.layers {
            layer.check_invariants()?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<LayerSnapshot> {
        self.layers
            .iter()
            .enumerate()
            .map(|(d, l)| l.snapshot(d))
            .collect()
    }

    pub fn from_snapshot(snaps: &[LayerSnapshot]) -> Result<Self> {
        let layers = snaps
            .iter()
            .map(LayerPartition::from_snapshot)
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }
}

/// Epochs until every layer's plan completes: the per-layer step count
/// `ceil((1 - p) * S)` maximized over layers, times the update interval.
pub fn plan_duration(set: &PartitionSet, sharing_ratio: f64, delta_epochs: f64) -> f64 {
    if sharing_ratio >= 1.0 {
        return 0.0;
    }
    let max_steps = set
        .layers()
        .iter()
        .map(|l| ((1.0 - sharing_ratio) * l.num_params() as f64).ceil())
        .fold(0.0f64, f64::max);
    delta_epochs * max_steps
}

/// JSON-serializable partition state: per-task index lists for the current
/// assignment and the visited sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub layer: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub mask: Vec<Vec<usize>>,
    pub visited: Vec<Vec<usize>>,
    pub steps_done: usize,
}

/// The update-plan clock: converts elapsed training iterations into due
/// update steps and decides when a layer should stop roaming.
///
/// An update step is due each time `floor(elapsed_epochs / delta)`
/// increments. A layer keeps accepting steps until its update ratio reaches
/// `target_r`; a target of exactly 1 runs the plan to full completion, which
/// under Bernoulli initialization can take a few more steps than
/// `(1 - p) * S` for tasks that started with fewer visited parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoamingSchedule {
    delta: f64,
    target_r: f64,
    iterations_per_epoch: usize,
    steps_applied: usize,
}

impl RoamingSchedule {
    pub fn new(delta: f64, target_r: f64, iterations_per_epoch: usize) -> Result<Self> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::NonPositiveDelta { delta });
        }
        if !(0.0..=1.0).contains(&target_r) {
            return Err(Error::TargetRatioOutOfRange { target_r });
        }
        if iterations_per_epoch == 0 {
            return Err(Error::Config("iterations_per_epoch must be >= 1".into()));
        }
        Ok(RoamingSchedule {
            delta,
            target_r,
            iterations_per_epoch,
            steps_applied: 0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn target_r(&self) -> f64 {
        self.target_r
    }

    /// Global update steps fired so far (the clock value c).
    pub fn steps_applied(&self) -> usize {
        self.steps_applied
    }

    pub fn elapsed_epochs(&self, iterations_done: usize) -> f64 {
        iterations_done as f64 / self.iterations_per_epoch as f64
    }

    /// How many update steps are due but not yet fired after
    /// `iterations_done` completed optimizer iterations.
    pub fn due_steps(&self, iterations_done: usize) -> usize {
        let target = (self.elapsed_epochs(iterations_done) / self.delta).floor() as usize;
        target.saturating_sub(self.steps_applied)
    }

    /// Records one fired update step.
    pub fn advance(&mut self) {
        self.steps_applied += 1;
    }

    /// Whether a layer should take part in the next update step. Completion
    /// targets below 1 stop a layer once its nominal ratio reaches the
    /// target; a target of 1 keeps it roaming until every task finishes.
    pub fn layer_wants_update(&self, layer: &LayerPartition, sharing_ratio: f64) -> bool {
        if self.target_r <= 0.0 {
            return false;
        }
        if self.target_r >= 1.0 {
            return !layer.is_complete();
        }
        layer.update_ratio(sharing_ratio) < self.target_r && !layer.is_complete()
    }
}
