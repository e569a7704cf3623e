//! Dynamic binary task-partitioning for multi-task networks.
//!
//! A multi-task network trained with hard parameter sharing gives every task
//! the full trunk; hard partitioning gives every task a fixed slice. This
//! crate implements a third regime: each layer carries a binary task x
//! parameter assignment matrix, initialized so each task holds a `p` fraction
//! of the layer, and a bounded update plan lets every task's slice roam
//! across the layer during training — one swap per task per layer per update
//! step — until each task has visited every parameter.
//!
//! * [`partition`] — the assignment matrices, the update plan, its schedule,
//!   and JSON snapshots.
//! * [`selection`] — how swap pairs are chosen (seeded uniform, or by weight
//!   cosine similarity).
//! * [`net`] — a small dense network with channel masks, manual
//!   backpropagation, and Adam, all in `f64`.
//! * [`synth`] — families of synthetic tasks with a controllable
//!   task-correlation dial.
//! * [`harness`] — experiment driver, grid sweeps, the statistical
//!   verification suite, and SVG plots.
//!
//! The `examples/` directory is the front door: each example is a runnable
//! tour of one capability. A thin `maxroam` binary exposes the same flows as
//! `run` / `sweep` / `verify` / `plot` subcommands for scripted use.

pub mod error;
pub mod harness;
pub mod net;
pub mod partition;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, McRegime, Mode, RunSummary, SweepConfig, VerifyReport};
pub use net::{Activation, Adam, Gradients, LossKind, MaskedLayer, MaskedNetwork, TaskHead};
pub use partition::{
    plan_duration, update_ratio_for, visit_probability, InitMode, LayerPartition, LayerSnapshot,
    PartitionSet, RoamingSchedule, UpdateOutcome,
};
pub use selection::{SelectionKind, SelectionStrategy};
pub use synth::{Split, TaskDataset, TaskFamilySpec, TaskKind};
