//! Experiment harness: configs, the training driver, grid sweeps, the
//! statistical verification suite, and SVG plots.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, Mode};
pub use metrics::{f_score, read_metrics, MetricsRecord, MetricsWriter};
pub use plot::{render_all, render_plot, PlotKind};
pub use run::{read_summary, run_experiment, RunSummary, TaskSummary};
pub use sweep::{read_sweep_rows, run_sweep, SweepConfig, SweepOutcome, SweepRow};
pub use verify::{run_verification, CheckResult, McRegime, VerifyReport};
