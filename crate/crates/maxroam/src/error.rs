use thiserror::Error;

/// Errors surfaced by partition bookkeeping, masked training and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate layer: S = {s}, T = {t} (both must be >= 1)")]
    DegenerateLayer { s: usize, t: usize },

    #[error("disjoint partitioning (p = 0) cannot give {t} tasks a nonempty share of {s} parameters")]
    InfeasibleDisjoint { s: usize, t: usize },

    #[error("sharing ratio {p} outside [0, 1]")]
    SharingRatioOutOfRange { p: f64 },

    #[error("task index {task} out of range for T = {t}")]
    TaskOutOfRange { task: usize, t: usize },

    #[error("active set of task {task} is empty; cannot pick a parameter to release")]
    EmptyActiveSet { task: usize },

    #[error("cosine selection requires layer weight vectors but none were provided")]
    MissingWeights,

    #[error("layer {layer}: network width {width} does not match partition size {s}")]
    ShapeMismatch { layer: usize, width: usize, s: usize },

    #[error("infeasible task family: {0}")]
    InfeasibleTaskFamily(String),

    #[error("non-finite loss for task {task} at iteration {iteration}: {value}")]
    NonFiniteLoss {
        task: usize,
        iteration: usize,
        value: f64,
    },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("update interval must be positive, got {delta}")]
    NonPositiveDelta { delta: f64 },

    #[error("target completion rate {target_r} outside [0, 1]")]
    TargetRatioOutOfRange { target_r: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot does not describe a valid partition: {0}")]
    BadSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
