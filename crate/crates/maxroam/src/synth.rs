//! Synthetic multi-task datasets with a task-correlation dial.
//!
//! Every task reads the same nonlinear features `g(x) = tanh(W x)` of a
//! shared random projection and scores them along its own direction:
//! `y_t = v_t · g(x) + noise`. The directions are built from an orthonormal
//! basis `{q_t}` as
//!
//! ```text
//! v_t = a q_t + b (q_1 + ... + q_T),
//! a = sqrt(1 - rho),
//! b = (-sqrt(1 - rho) + sqrt(1 + (T - 1) rho)) / T
//! ```
//!
//! which makes every `v_t` unit length with pairwise cosine exactly `rho`:
//! `rho = 1` collapses all tasks onto one target, `rho = 0` makes them
//! orthogonal, and negative `rho` down to `-1/(T - 1)` makes them point
//! away from each other. Binary tasks threshold the score at the split's
//! median, so each split is exactly class-balanced (up to the odd sample).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// What kind of target a task family produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Raw scores as regression targets.
    Regression,
    /// Scores thresholded at the split median into {0, 1} labels.
    Binary,
}

/// Recipe for one family of related tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFamilySpec {
    pub num_tasks: usize,
    pub input_dim: usize,
    /// Dimension of the shared feature space; must be >= `num_tasks` so an
    /// orthonormal direction basis exists.
    pub latent_dim: usize,
    /// Pairwise cosine between task directions, in `[-1/(T-1), 1]`.
    pub correlation: f64,
    /// Standard deviation of the additive Gaussian score noise.
    pub noise_std: f64,
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_val: usize,
}

impl TaskFamilySpec {
    /// Rejects recipes whose direction geometry cannot exist, with the
    /// reason spelled out.
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 || self.input_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InfeasibleTaskFamily(
                "num_tasks, input_dim, and latent_dim must all be >= 1".into(),
            ));
        }
        if self.latent_dim < self.num_tasks {
            return Err(Error::InfeasibleTaskFamily(format!(
                "{} tasks need {} orthonormal directions but the latent space \
                 has only {} dimensions",
                self.num_tasks, self.num_tasks, self.latent_dim
            )));
        }
        if self.correlation > 1.0 {
            return Err(Error::InfeasibleTaskFamily(format!(
                "correlation {} exceeds 1",
                self.correlation
            )));
        }
        let floor = if self.num_tasks > 1 {
            -1.0 / (self.num_tasks as f64 - 1.0)
        } else {
            // A single task has no pairwise correlation to realize.
            -1.0
        };
        if self.correlation < floor {
            return Err(Error::InfeasibleTaskFamily(format!(
                "correlation {} is below the feasibility floor -1/(T-1) = {floor} \
                 for T = {}: the direction Gram matrix would not be positive \
                 semidefinite",
                self.correlation, self.num_tasks
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InfeasibleTaskFamily(format!(
                "noise_std {} is negative",
                self.noise_std
            )));
        }
        if self.n_train < 2 || self.n_val < 2 {
            return Err(Error::InfeasibleTaskFamily(
                "each split needs at least 2 samples".into(),
            ));
        }
        Ok(())
    }
}

/// One data split: shared inputs, one target row per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub xs: Vec<Vec<f64>>,
    /// `ys[t][i]` is task `t`'s target on sample `i`.
    pub ys: Vec<Vec<f64>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// A generated task family: the recipe, the latent readout directions it
/// drew, and its train and validation splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub spec: TaskFamilySpec,
    /// Unit readout direction per task; pairwise cosines equal
    /// `spec.correlation` by construction.
    pub directions: Vec<Vec<f64>>,
    pub train: Split,
    pub val: Split,
}

/// Draws a task family. The RNG is consumed in a fixed order (projection,
/// direction basis, train inputs, train noise task by task, then the same
/// for validation), so one seed pins the whole dataset.
pub fn generate(spec: &TaskFamilySpec, rng: &mut ChaCha8Rng) -> Result<TaskDataset> {
    spec.validate()?;
    let t = spec.num_tasks;

    // Shared projection, scaled so each feature pre-activation has roughly
    // unit variance under standard-normal inputs.
    let w_scale = 1.0 / (spec.input_dim as f64).sqrt();
    let w: Vec<Vec<f64>> = (0..spec.latent_dim)
        .map(|_| {
            (0..spec.input_dim)
                .map(|_| w_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let basis = orthonormal_basis(t, spec.latent_dim, rng);
    let directions = correlated_directions(&basis, spec.correlation);

    let features = |x: &[f64]| -> Vec<f64> {
        w.iter()
            .map(|row| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>().tanh())
            .collect()
    };
    let mut draw_split = |n: usize| -> Split {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..spec.input_dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let gs: Vec<Vec<f64>> = xs.iter().map(|x| features(x)).collect();
        let ys = directions
            .iter()
            .map(|v| {
                gs.iter()
                    .map(|g| {
                        let score: f64 = v.iter().zip(g).map(|(v, g)| v * g).sum();
                        score + spec.noise_std * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        Split { xs, ys }
    };

    let mut train = draw_split(spec.n_train);
    let mut val = draw_split(spec.n_val);
    if spec.kind == TaskKind::Binary {
        for ys in train.ys.iter_mut().chain(val.ys.iter_mut()) {
            binarize_at_median(ys);
        }
    }
    Ok(TaskDataset {
        spec: spec.clone(),
        directions,
        train,
        val,
    })
}

/// [`generate`] with a fresh RNG seeded from `seed`.
pub fn generate_seeded(spec: &TaskFamilySpec, seed: u64) -> Result<TaskDataset> {
    use rand::SeedableRng;
    generate(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Gram-Schmidt over freshly drawn Gaussian vectors. Requires `count <= dim`
/// (checked by [`TaskFamilySpec::validate`]); redraws on the measure-zero
/// event that a draw is (numerically) dependent on its predecessors.
fn orthonormal_basis(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut q: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for prev in &basis {
            let dot: f64 = q.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (qi, pi) in q.iter_mut().zip(prev) {
                *qi -= dot * pi;
            }
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            q.iter_mut().for_each(|v| *v /= norm);
            basis.push(q);
        }
    }
    basis
}

/// Mixes an orthonormal basis into unit directions with pairwise cosine
/// exactly `rho`.
fn correlated_directions(basis: &[Vec<f64>], rho: f64) -> Vec<Vec<f64>> {
    let t = basis.len();
    let dim = basis[0].len();
    let a = (1.0 - rho).sqrt();
    let c = (1.0 + (t as f64 - 1.0) * rho).sqrt();
    let b = (c - a) / t as f64;
    let mut sum = vec![0.0; dim];
    for q in basis {
        for (s, qi) in sum.iter_mut().zip(q) {
            *s += qi;
        }
    }
    basis
        .iter()
        .map(|q| {
            q.iter()
                .zip(&sum)
                .map(|(qi, si)| a * qi + b * si)
                .collect()
        })
        .collect()
}

/// Replaces scores with {0, 1} labels split at the median: a score at or
/// above `sorted[n / 2]` is positive, so exactly `ceil(n / 2)` samples are
/// positive whenever scores are distinct.
fn binarize_at_median(ys: &mut [f64]) {
    let mut sorted = ys.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must be finite"));
    let threshold = sorted[ys.len() / 2];
    for y in ys.iter_mut() {
        *y = if *y >= threshold { 1.0 } else { 0.0 };
    }
}

/// What `family.json` holds alongside the CSV splits.
#[derive(Serialize, Deserialize)]
struct FamilySidecar {
    spec: TaskFamilySpec,
    directions: Vec<Vec<f64>>,
}

impl TaskDataset {
    /// Writes `train.csv`, `val.csv`, and a `family.json` sidecar holding
    /// the recipe and readout directions. CSV columns are `task,x0..x{D-1},y`,
    /// one row per (task, sample) pair; floats use the shortest
    /// representation that parses back to the same value, so export and
    /// import round-trip exactly.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_split_csv(&dir.join("train.csv"), &self.train)?;
        write_split_csv(&dir.join("val.csv"), &self.val)?;
        let mut sidecar = std::fs::File::create(dir.join("family.json"))?;
        let payload = FamilySidecar {
            spec: self.spec.clone(),
            directions: self.directions.clone(),
        };
        serde_json::to_writer_pretty(&mut sidecar, &payload)?;
        sidecar.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a directory produced by [`write_dir`](Self::write_dir).
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let sidecar = std::fs::read_to_string(dir.join("family.json"))?;
        let payload: FamilySidecar = serde_json::from_str(&sidecar)?;
        let train = read_split_csv(&dir.join("train.csv"), &payload.spec)?;
        let val = read_split_csv(&dir.join("val.csv"), &payload.spec)?;
        Ok(TaskDataset {
            spec: payload.spec,
            directions: payload.directions,
            train,
            val,
        })
    }
}

fn write_split_csv(path: &Path, split: &Split) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let dim = split.xs.first().map_or(0, Vec::len);
    let mut header = vec!["task".to_string()];
    header.extend((0..dim).map(|d| format!("x{d}")));
    header.push("y".to_string());
    writer.write_record(&header)?;
    for (t, ys) in split.ys.iter().enumerate() {
        for (x, y) in split.xs.iter().zip(ys) {
            let mut record = vec![t.to_string()];
            record.extend(x.iter().map(|v| v.to_string()));
            record.push(y.to_string());
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn read_split_csv(path: &Path, spec: &TaskFamilySpec) -> Result<Split> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); spec.num_tasks];
    let parse = |field: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("bad float {field:?} in {}: {e}", path.display())))
    };
    for record in reader.records() {
        let record = record?;
        let task: usize = record
            .get(0)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad task column in {}", path.display())))?;
        if task >= spec.num_tasks {
            return Err(Error::Config(format!(
                "task {task} out of range in {}",
                path.display()
            )));
        }
        let x = record
            .iter()
            .skip(1)
            .take(record.len() - 2)
            .map(parse)
            .collect::<Result<Vec<f64>>>()?;
        let y = parse(record.get(record.len() - 1).unwrap())?;
        if task == 0 {
            xs.push(x);
        }
        ys[task].push(y);
    }
    let n = xs.len();
    if ys.iter().any(|column| column.len() != n) {
        return Err(Error::Config(format!(
            "tasks disagree on sample count in {}",
            path.display()
        )));
    }
    Ok(Split { xs, ys })
}
