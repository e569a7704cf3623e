//! Experiment configuration: a JSON-serializable description of one
//! training run, including the training regime being compared.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::Adam;
use crate::partition::InitMode;
use crate::selection::SelectionKind;
use crate::synth::TaskFamilySpec;

/// Training regime. All regimes other than [`Stl`](Mode::Stl) run the very
/// same code path; a regime only pins `sharing_ratio` or `target_r`, so any
/// behavioral difference between regimes is attributable to those two knobs
/// and nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Roaming partitions, as configured.
    Mr,
    /// The initial partition, frozen: `target_r = 0`.
    Fixed,
    /// Every task owns every parameter: `sharing_ratio = 1`.
    FullShare,
    /// A frozen disjoint partition: `sharing_ratio = 0`, `target_r = 0`.
    Disjoint,
    /// One independent unmasked network per task.
    Stl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Mr => "mr",
            Mode::Fixed => "fixed",
            Mode::FullShare => "full_share",
            Mode::Disjoint => "disjoint",
            Mode::Stl => "stl",
        };
        // `pad` rather than `write_str` so width specifiers work.
        f.pad(s)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mr" => Ok(Mode::Mr),
            "fixed" => Ok(Mode::Fixed),
            "full_share" => Ok(Mode::FullShare),
            "disjoint" => Ok(Mode::Disjoint),
            "stl" => Ok(Mode::Stl),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected mr, fixed, full_share, disjoint, or stl"
            ))),
        }
    }
}

/// Everything one training run depends on. Serialized as JSON for the
/// `run` subcommand and stored verbatim in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::mode")]
    pub mode: Mode,
    /// Fraction `p` of each layer a task holds at initialization.
    pub sharing_ratio: f64,
    /// Epochs between partition update steps.
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// Update ratio at which layers stop roaming; 1 runs the plan to
    /// completion, 0 freezes the initial partition.
    #[serde(default = "defaults::target_r")]
    pub target_r: f64,
    #[serde(default = "defaults::selection")]
    pub selection: SelectionKind,
    #[serde(default = "defaults::init")]
    pub init: InitMode,
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Hidden-layer widths of the trunk; each width is one maskable layer.
    pub trunk_widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub task_family: TaskFamilySpec,
}

mod defaults {
    use super::*;

    pub fn mode() -> Mode {
        Mode::Mr
    }

    pub fn delta() -> f64 {
        0.2
    }

    pub fn target_r() -> f64 {
        1.0
    }

    pub fn selection() -> SelectionKind {
        SelectionKind::Uniform
    }

    pub fn init() -> InitMode {
        InitMode::Bernoulli
    }

    pub fn batch_size() -> usize {
        32
    }

    pub fn learning_rate() -> f64 {
        Adam::DEFAULT_LR
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sharing_ratio) {
            return Err(Error::SharingRatioOutOfRange {
                p: self.sharing_ratio,
            });
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.trunk_widths.is_empty() || self.trunk_widths.contains(&0) {
            return Err(Error::Config(
                "trunk_widths needs at least one layer, all widths >= 1".into(),
            ));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::NonPositiveDelta { delta: self.delta });
        }
        // Exact-count init draws round(p*S) parameters per task with no
        // coverage repair, so a slice that rounds to zero would leave the
        // task unable to learn (and, for p = 0, defeat the one-task-per-
        // parameter repair the disjoint baseline relies on).
        if self.init == InitMode::ExactCount {
            let (p_eff, _) = self.effective_knobs();
            for &width in &self.trunk_widths {
                if (p_eff * width as f64).round() < 1.0 {
                    return Err(Error::Config(format!(
                        "exact-count init gives each task round({p_eff} * {width}) = 0 \
                         parameters; use bernoulli init or raise the sharing ratio"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.target_r) {
            return Err(Error::TargetRatioOutOfRange {
                target_r: self.target_r,
            });
        }
        self.task_family.validate()
    }

    /// The `(sharing_ratio, target_r)` actually used once the mode's pins
    /// are applied.
    pub fn effective_knobs(&self) -> (f64, f64) {
        match self.mode {
            Mode::Mr => (self.sharing_ratio, self.target_r),
            Mode::Fixed => (self.sharing_ratio, 0.0),
            Mode::FullShare => (1.0, self.target_r),
            Mode::Disjoint => (0.0, 0.0),
            // Each per-task network is fully owned by its only task.
            Mode::Stl => (1.0, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TaskKind;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Mr,
            sharing_ratio: 0.5,
            delta: 0.2,
            target_r: 1.0,
            selection: SelectionKind::Uniform,
            init: InitMode::Bernoulli,
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-3,
            trunk_widths: vec![8, 6],
            seed: 0,
            task_family: TaskFamilySpec {
                num_tasks: 2,
                input_dim: 4,
                latent_dim: 4,
                correlation: 0.0,
                noise_std: 0.05,
                kind: TaskKind::Binary,
                n_train: 48,
                n_val: 24,
            },
        }
    }

    #[test]
    fn json_roundtrip_preserves_the_config() {
        let config = tiny_config();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn missing_optional_fields_take_defaults() {
        let json = r#"{
            "sharing_ratio": 0.5,
            "epochs": 3,
            "trunk_widths": [16],
            "task_family": {
                "num_tasks": 2, "input_dim": 4, "latent_dim": 4,
                "correlation": 0.0, "noise_std": 0.1, "kind": "binary",
                "n_train": 32, "n_val": 16
            }
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.mode, Mode::Mr);
        assert_eq!(config.delta, 0.2);
        assert_eq!(config.target_r, 1.0);
        assert_eq!(config.selection, SelectionKind::Uniform);
        assert_eq!(config.batch_size, 32);
        assert_eq!(config.learning_rate, Adam::DEFAULT_LR);
        assert_eq!(config.seed, 0);
        config.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_knobs() {
        let mut config = tiny_config();
        config.sharing_ratio = 1.5;
        assert!(config.validate().is_err());

        let mut config = tiny_config();
        config.epochs = 0;
        assert!(config.validate().is_err());

        let mut config = tiny_config();
        config.delta = 0.0;
        assert!(config.validate().is_err());

        let mut config = tiny_config();
        config.task_family.correlation = -2.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn modes_pin_the_two_knobs() {
        let mut config = tiny_config();
        config.sharing_ratio = 0.4;
        config.target_r = 0.8;
        config.mode = Mode::Mr;
        assert_eq!(config.effective_knobs(), (0.4, 0.8));
        config.mode = Mode::Fixed;
        assert_eq!(config.effective_knobs(), (0.4, 0.0));
        config.mode = Mode::FullShare;
        assert_eq!(config.effective_knobs(), (1.0, 0.8));
        config.mode = Mode::Disjoint;
        assert_eq!(config.effective_knobs(), (0.0, 0.0));
        config.mode = Mode::Stl;
        assert_eq!(config.effective_knobs(), (1.0, 0.0));
    }

    #[test]
    fn mode_names_roundtrip() {
        for mode in [Mode::Mr, Mode::Fixed, Mode::FullShare, Mode::Disjoint, Mode::Stl] {
            assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
        }
        assert!("mrr".parse::<Mode>().is_err());
    }
}
