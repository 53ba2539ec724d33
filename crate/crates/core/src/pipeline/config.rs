use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::episodes::EpisodeParams;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandsMode {
    #[default]
    Both,
    Dominant,
}

impl fmt::Display for HandsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HandsMode::Both => "both",
            HandsMode::Dominant => "dominant",
        })
    }
}

impl FromStr for HandsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(HandsMode::Both),
            "dominant" => Ok(HandsMode::Dominant),
            other => Err(Error::Config(format!(
                "unknown hands mode {other:?} (expected both|dominant)"
            ))),
        }
    }
}

/// Explicit train/test participant lists instead of k-fold splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// How training windows are drawn from the training recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingPlan {
    /// Window stride in frames; half a window when unset.
    pub stride_frames: Option<usize>,
    /// Fraction of windows without any gesture that are kept.
    pub background_keep: f64,
    /// Training participants held back for early stopping.
    pub val_participants: usize,
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            stride_frames: None,
            background_keep: 0.1,
            val_participants: 1,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Recording directories, or directories containing them.
    pub dataset: Vec<PathBuf>,
    /// Use the built-in synthetic benchmark suite as the dataset.
    pub synth_suite: bool,
    pub hands: HandsMode,
    pub model: ModelConfig,
    pub training: TrainingPlan,
    pub episodes: EpisodeParams,
    pub folds: usize,
    pub holdout: Option<Holdout>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Write per-frame probabilities next to the other artifacts.
    pub write_probabilities: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: Vec::new(),
            synth_suite: false,
            hands: HandsMode::Both,
            model: ModelConfig::default(),
            training: TrainingPlan::default(),
            episodes: EpisodeParams::default(),
            folds: 7,
            holdout: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            write_probabilities: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.holdout.is_none() && self.folds < 2 {
            return Err(Error::Config("at least 2 folds are required".into()));
        }
        if !(0.0..=1.0).contains(&self.training.background_keep) {
            return Err(Error::Config("background_keep must be in [0, 1]".into()));
        }
        if self.training.stride_frames == Some(0) {
            return Err(Error::Config("stride_frames must be positive".into()));
        }
        Ok(())
    }

    /// Model config with the run seed applied.
    pub fn seeded_model(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }
}
