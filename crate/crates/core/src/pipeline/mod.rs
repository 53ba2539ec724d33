//! Dataset handling, per-recording analysis and participant-level
//! cross-validation.

mod analysis;
mod artifacts;
mod config;
mod crossval;
mod dataset;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use analysis::{active_hands, evaluate_day, DayAnalysis, GroundTruth};
pub use artifacts::{read_report, write_day, write_probs_csv, write_report, DayArtifacts};
pub use config::{HandsMode, Holdout, RunConfig, TrainingPlan};
pub use crossval::{
    build_training_set, crossval, evaluate_fold, holdout_fold, oracle_run, plan_folds, split_folds, Failure, Fold,
    FoldOutcome, RunOutcome, TrainingSet,
};
pub use dataset::{Dataset, DatasetEntry, Source};

use crate::error::Result;
use crate::metrics::EvalReport;

/// What a run's outputs are reproducible from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub dataset_sha256: String,
}

impl Provenance {
    /// The output directory and dataset locations are left out of the
    /// config hash; the dataset hash covers the data itself.
    pub fn new(cfg: &RunConfig, ds: &Dataset) -> Result<Self> {
        let config = RunConfig {
            dataset: Vec::new(),
            out_dir: std::path::PathBuf::new(),
            ..cfg.clone()
        }
        .to_toml()?;
        Ok(Self {
            config_sha256: hex::encode(Sha256::digest(config.as_bytes())),
            seed: cfg.seed,
            dataset_sha256: ds.content_hash()?,
        })
    }

    pub fn stamp(&self, report: EvalReport) -> EvalReport {
        report
            .with_provenance("config_sha256", &self.config_sha256)
            .with_provenance("seed", self.seed.to_string())
            .with_provenance("dataset_sha256", &self.dataset_sha256)
    }
}
