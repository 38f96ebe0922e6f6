//! Hyperparameter bundles for desk-scale and paper-scale runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{RandomParams, UniversalParams, UntargetedParams};
use crate::book::{Label, SnippetShape};
use crate::data::SynthParams;
use crate::models::{Architecture, ModelConfig, OptimizerKind, TrainSchedule};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(format!("unknown profile `{other}` (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Linear,
    Mlp,
    Lstm,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Linear, ArchKind::Mlp, ArchKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Linear => "linear",
            ArchKind::Mlp => "mlp",
            ArchKind::Lstm => "lstm",
        }
    }
}

impl FromStr for ArchKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ArchKind::Linear),
            "mlp" => Ok(ArchKind::Mlp),
            "lstm" => Ok(ArchKind::Lstm),
            other => Err(format!("unknown architecture `{other}` (expected linear, mlp or lstm)")),
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture, input decimation stride and training schedule of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSettings {
    pub arch: Architecture,
    pub stride: usize,
    pub schedule: TrainSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub scale: Scale,
    pub synth: SynthParams,
    pub train_days: usize,
    pub test_days: usize,
    /// Independent sessions, one snippet each, for the no-signal check.
    pub null_sessions: usize,
    pub shape: SnippetShape,
    pub linear: ArchSettings,
    pub mlp: ArchSettings,
    pub lstm: ArchSettings,
    pub eval_snippets: usize,
    pub attack_snippets: usize,
    pub untargeted: UntargetedParams,
    /// Random-order budget as a multiple of the untargeted capital cap.
    pub random_multiplier: f64,
    pub random_max_size: u32,
    /// Settings of the size-penalized universal attack; the unpenalized
    /// variant uses `gamma = 0`.
    pub universal: UniversalParams,
    /// Training snippets sampled as the universal attack pool.
    pub universal_pool: usize,
    /// Test snippets a universal plan is applied to.
    pub universal_test: usize,
}

impl Profile {
    pub fn of(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Profile::desk(),
            Scale::Paper => Profile::paper(),
        }
    }

    pub fn desk() -> Self {
        let adam = |iterations: usize| TrainSchedule {
            optimizer: OptimizerKind::Adam,
            iterations,
            batch_size: 256,
            learning_rate: 0.01,
            milestones: vec![iterations / 2, 3 * iterations / 4],
        };
        Profile {
            scale: Scale::Desk,
            synth: SynthParams {
                beta: 2.0,
                seed: 1,
                ..SynthParams::default()
            },
            train_days: 24,
            test_days: 4,
            null_sessions: 10_000,
            shape: SnippetShape::PAPER,
            linear: ArchSettings {
                arch: Architecture::Linear,
                stride: 10,
                schedule: adam(300),
            },
            mlp: ArchSettings {
                arch: Architecture::Mlp { depth: 4, width: 256 },
                stride: 10,
                schedule: adam(1_000),
            },
            lstm: ArchSettings {
                arch: Architecture::Lstm { layers: 3, hidden: 32 },
                stride: 60,
                schedule: adam(150),
            },
            eval_snippets: 10_000,
            attack_snippets: 500,
            untargeted: UntargetedParams {
                steps: 200,
                alpha0: 4_000.0,
                capital: 40_000.0,
                r: 0.95,
                stride: 100,
            },
            random_multiplier: 20.0,
            random_max_size: 100,
            universal: UniversalParams {
                inner_alpha: 0.35,
                gamma: 0.2,
                stride: 20,
                ..UniversalParams::paper(Label::Up)
            },
            universal_pool: 2_000,
            universal_test: 2_000,
        }
    }

    pub fn paper() -> Self {
        Profile {
            scale: Scale::Paper,
            synth: SynthParams::default(),
            train_days: 60,
            test_days: 20,
            null_sessions: 10_000,
            shape: SnippetShape::PAPER,
            linear: ArchSettings {
                arch: Architecture::Linear,
                stride: 1,
                schedule: TrainSchedule::paper_linear(),
            },
            mlp: ArchSettings {
                arch: Architecture::Mlp { depth: 4, width: 8_000 },
                stride: 1,
                schedule: TrainSchedule::paper_mlp(),
            },
            lstm: ArchSettings {
                arch: Architecture::Lstm { layers: 3, hidden: 100 },
                stride: 10,
                schedule: TrainSchedule::paper_lstm(),
            },
            eval_snippets: 10_000,
            attack_snippets: 500,
            untargeted: UntargetedParams::paper(),
            random_multiplier: 20.0,
            random_max_size: 1_000,
            universal: UniversalParams {
                gamma: 5.0,
                ..UniversalParams::paper(Label::Up)
            },
            universal_pool: 10_000,
            universal_test: 10_000,
        }
    }

    pub fn arch(&self, kind: ArchKind) -> &ArchSettings {
        match kind {
            ArchKind::Linear => &self.linear,
            ArchKind::Mlp => &self.mlp,
            ArchKind::Lstm => &self.lstm,
        }
    }

    /// Model configuration for `kind` with the given normalization scale.
    pub fn model_config(&self, kind: ArchKind, scale: f64) -> ModelConfig {
        let a = self.arch(kind);
        ModelConfig {
            arch: a.arch,
            window: self.shape.window,
            stride: a.stride,
            scale,
        }
    }

    pub fn random(&self) -> RandomParams {
        RandomParams {
            budget: self.random_multiplier * self.untargeted.capital,
            max_size: self.random_max_size,
        }
    }
}
