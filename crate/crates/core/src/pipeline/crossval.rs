use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analysis::{evaluate_day, DayAnalysis, GroundTruth};
use super::artifacts::{write_day, write_report};
use super::{Dataset, Holdout, Provenance, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{EvalAccumulator, EvalReport};
use crate::model::{prepare_recording, train, Checkpoint, Predictor};
use crate::preprocess::{normalize, window, CombinedSeries, NormStats, WindowBatch};

const FOLD_STREAM: u64 = 0x666f_6c64_0000_0001;
const SELECT_STREAM: u64 = 0x7365_6c65_6374_0001;

/// Participants used for training and testing in one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    /// Fails when any participant appears on both sides. A fold without
    /// test participants is a plain training run.
    pub fn check_leakage(&self) -> Result<()> {
        let test: BTreeSet<&String> = self.test.iter().collect();
        if let Some(p) = self.train.iter().find(|p| test.contains(p)) {
            return Err(Error::CrossValidation(format!(
                "participant {p} is in both the training and test sets of fold {}",
                self.index
            )));
        }
        Ok(())
    }
}

/// Shuffles participants with `seed` and deals them round-robin into `k`
/// test groups; each fold trains on everyone else.
pub fn split_folds(participants: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let unique: BTreeSet<&String> = participants.iter().collect();
    if k < 2 {
        return Err(Error::CrossValidation("at least 2 folds are required".into()));
    }
    if unique.len() < k {
        return Err(Error::CrossValidation(format!(
            "{} participants cannot fill {k} folds",
            unique.len()
        )));
    }
    let mut order: Vec<String> = unique.into_iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ FOLD_STREAM));
    let mut tests: Vec<Vec<String>> = vec![Vec::new(); k];
    for (i, p) in order.iter().enumerate() {
        tests[i % k].push(p.clone());
    }
    let folds: Vec<Fold> = tests
        .into_iter()
        .enumerate()
        .map(|(index, mut test)| {
            test.sort();
            let mut train: Vec<String> = order.iter().filter(|p| !test.contains(p)).cloned().collect();
            train.sort();
            Fold { index, train, test }
        })
        .collect();
    for f in &folds {
        f.check_leakage()?;
    }
    Ok(folds)
}

/// A single fold from explicit lists; every listed participant must exist.
pub fn holdout_fold(participants: &[String], holdout: &Holdout) -> Result<Fold> {
    for p in holdout.train.iter().chain(&holdout.test) {
        if !participants.contains(p) {
            return Err(Error::CrossValidation(format!("participant {p} not in the dataset")));
        }
    }
    let mut train = holdout.train.clone();
    let mut test = holdout.test.clone();
    train.sort();
    train.dedup();
    test.sort();
    test.dedup();
    if train.is_empty() || test.is_empty() {
        return Err(Error::CrossValidation("holdout lists must both be non-empty".into()));
    }
    let fold = Fold { index: 0, train, test };
    fold.check_leakage()?;
    Ok(fold)
}

/// Folds for `cfg`: the holdout split when configured, else k-fold.
pub fn plan_folds(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<Fold>> {
    let participants = ds.participants();
    match &cfg.holdout {
        Some(h) => Ok(vec![holdout_fold(&participants, h)?]),
        None => split_folds(&participants, cfg.folds, cfg.seed),
    }
}

/// A recording that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub recording: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub norm: NormStats,
    pub failures: Vec<Failure>,
}

fn select_windows(batch: WindowBatch, keep: f64, rng: &mut ChaCha8Rng) -> WindowBatch {
    let frames = batch.frames;
    let windows = batch
        .windows
        .into_iter()
        .filter(|w| {
            let draw: f64 = rng.gen();
            w.has_positive() || draw < keep
        })
        .collect();
    WindowBatch { windows, frames }
}

/// Loads the training participants' recordings, fits normalization on them
/// alone and cuts labeled windows. Windows without gestures are thinned to
/// the configured fraction. The last `val_participants` participants feed
/// validation when enough remain for training.
pub fn build_training_set(ds: &Dataset, fold: &Fold, cfg: &RunConfig) -> Result<TrainingSet> {
    fold.check_leakage()?;
    let n_val = if fold.train.len() > cfg.training.val_participants {
        cfg.training.val_participants
    } else {
        0
    };
    let val_ids: Vec<String> = fold.train[fold.train.len() - n_val..].to_vec();
    let mut failures = Vec::new();
    let mut series: Vec<(bool, CombinedSeries)> = Vec::new();
    for entry in ds.select(&fold.train) {
        debug_assert!(!fold.test.contains(&entry.participant_id));
        let prepared = entry.load().and_then(|rec| {
            if rec.labels_right.is_none() {
                return Err(Error::invalid("training recordings need annotations"));
            }
            prepare_recording(&rec)
        });
        match prepared {
            Ok(s) => series.push((val_ids.contains(&entry.participant_id), s)),
            Err(e) => failures.push(Failure {
                recording: entry.key(),
                error: e.to_string(),
            }),
        }
    }
    if series.is_empty() {
        return Err(Error::CrossValidation(format!(
            "fold {} has no usable training recordings",
            fold.index
        )));
    }
    let norm = NormStats::fit(series.iter().map(|(_, s)| s.data()))?;
    let frames = cfg.model.window_frames;
    let stride = cfg.training.stride_frames.unwrap_or((frames / 2).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SELECT_STREAM ^ fold.index as u64);
    let mut train_b = WindowBatch {
        windows: Vec::new(),
        frames,
    };
    let mut val_b = train_b.clone();
    for (is_val, s) in series {
        let batch = select_windows(
            window(&normalize(&s, &norm)?, frames, stride),
            cfg.training.background_keep,
            &mut rng,
        );
        if is_val {
            val_b.extend(batch);
        } else {
            train_b.extend(batch);
        }
    }
    Ok(TrainingSet {
        train: train_b,
        val: val_b,
        norm,
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: Fold,
    pub accumulator: EvalAccumulator,
    pub report: EvalReport,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub folds: Vec<FoldOutcome>,
    pub report: EvalReport,
    pub provenance: Provenance,
}

impl RunOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &Failure> {
        self.folds.iter().flat_map(|f| &f.failures)
    }
}

/// Runs inference on the fold's test recordings and scores them. Failing
/// recordings are recorded and skipped.
pub fn evaluate_fold(
    ds: &Dataset,
    fold: &Fold,
    ckpt: &Checkpoint,
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<(EvalAccumulator, Vec<Failure>)> {
    let predictor = Predictor::new(ckpt)?;
    let mut acc = EvalAccumulator::new();
    let mut failures = Vec::new();
    for entry in ds.select(&fold.test) {
        let result = entry.load().and_then(|rec| {
            let (pred, probs) = DayAnalysis::from_predictor(&rec, &predictor, cfg.hands, &cfg.episodes)?;
            let gt = GroundTruth::from_recording(&rec, &cfg.episodes)?;
            let mut day = EvalAccumulator::new();
            evaluate_day(&pred, &gt, &mut day)?;
            if let Some(dir) = out {
                let probs = cfg.write_probabilities.then_some(probs.as_slice());
                write_day(
                    &day_dir(dir, &entry.participant_id, &entry.day_id),
                    &pred,
                    Some(&gt),
                    probs,
                )?;
            }
            Ok(day)
        });
        match result {
            Ok(day) => acc.merge(&day),
            Err(e) => failures.push(Failure {
                recording: entry.key(),
                error: e.to_string(),
            }),
        }
    }
    Ok((acc, failures))
}

pub(crate) fn day_dir(root: &Path, participant: &str, day: &str) -> PathBuf {
    root.join(format!("{participant}_{day}"))
}

/// Trains and evaluates every fold, then pools the fold accumulators into
/// one report. With `out`, each fold writes its checkpoint, per-recording
/// artifacts and report under `fold_<k>/`.
pub fn crossval(cfg: &RunConfig, ds: &Dataset, out: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let provenance = Provenance::new(cfg, ds)?;
    let folds = plan_folds(cfg, ds)?;
    let model_cfg = cfg.seeded_model();
    let mut outcomes = Vec::new();
    let mut pooled = EvalAccumulator::new();
    for fold in folds {
        let fold_out = out.map(|d| d.join(format!("fold_{}", fold.index)));
        let set = build_training_set(ds, &fold, cfg)?;
        let ckpt = train(&set.train, &set.val, &model_cfg, &set.norm)?;
        if let Some(dir) = &fold_out {
            ckpt.save(&dir.join("model.ckpt"))?;
        }
        let (acc, mut failures) = evaluate_fold(ds, &fold, &ckpt, cfg, fold_out.as_deref())?;
        failures.splice(0..0, set.failures);
        let report = provenance
            .stamp(acc.finish()?)
            .with_provenance("fold", fold.index.to_string())
            .with_provenance("test_participants", fold.test.join(","));
        if let Some(dir) = &fold_out {
            write_report(dir, &report)?;
        }
        pooled.merge(&acc);
        outcomes.push(FoldOutcome {
            fold,
            accumulator: acc,
            report,
            failures,
        });
    }
    let report = provenance.stamp(pooled.finish()?);
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    Ok(RunOutcome {
        folds: outcomes,
        report,
        provenance,
    })
}

/// Scores annotation-derived labels through the post-processing chain;
/// every recording with annotations is its own test set.
pub fn oracle_run(cfg: &RunConfig, ds: &Dataset, out: Option<&Path>) -> Result<RunOutcome> {
    let provenance = Provenance::new(cfg, ds)?;
    let mut acc = EvalAccumulator::new();
    let mut failures = Vec::new();
    for entry in ds.entries() {
        let result = entry.load().and_then(|rec| {
            let pred = DayAnalysis::oracle(&rec, cfg.hands, &cfg.episodes)?;
            let gt = GroundTruth::from_recording(&rec, &cfg.episodes)?;
            let mut day = EvalAccumulator::new();
            evaluate_day(&pred, &gt, &mut day)?;
            if let Some(dir) = out {
                write_day(
                    &day_dir(dir, &entry.participant_id, &entry.day_id),
                    &pred,
                    Some(&gt),
                    None,
                )?;
            }
            Ok(day)
        });
        match result {
            Ok(day) => acc.merge(&day),
            Err(e) => failures.push(Failure {
                recording: entry.key(),
                error: e.to_string(),
            }),
        }
    }
    let report = provenance.stamp(acc.finish()?).with_provenance("labels", "oracle");
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    Ok(RunOutcome {
        folds: vec![FoldOutcome {
            fold: Fold {
                index: 0,
                train: Vec::new(),
                test: ds.participants(),
            },
            accumulator: acc,
            report: report.clone(),
            failures,
        }],
        report,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i:02}")).collect()
    }

    #[test]
    fn fewer_participants_than_folds_rejected() {
        assert!(matches!(split_folds(&ids(3), 4, 0), Err(Error::CrossValidation(_))));
        assert!(split_folds(&ids(4), 4, 0).is_ok());
    }

    #[test]
    fn seven_participants_each_tested_once() {
        let folds = split_folds(&ids(7), 7, 3).unwrap();
        let mut tested: Vec<String> = folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort();
        assert_eq!(tested, ids(7));
        assert!(folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 6));
    }

    #[test]
    fn leakage_detected() {
        let f = Fold {
            index: 2,
            train: ids(3),
            test: vec!["P01".into()],
        };
        assert!(matches!(f.check_leakage(), Err(Error::CrossValidation(_))));
    }

    #[test]
    fn holdout_validates_lists() {
        let all = ids(4);
        let h = Holdout {
            train: vec!["P00".into(), "P01".into()],
            test: vec!["P02".into(), "P03".into()],
        };
        let f = holdout_fold(&all, &h).unwrap();
        assert_eq!(f.test, ["P02", "P03"]);
        let overlap = Holdout {
            train: vec!["P00".into()],
            test: vec!["P00".into()],
        };
        assert!(holdout_fold(&all, &overlap).is_err());
        let missing = Holdout {
            train: vec!["P00".into()],
            test: vec!["X".into()],
        };
        assert!(holdout_fold(&all, &missing).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_participants(n in 2usize..30, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let all = ids(n);
            let folds = split_folds(&all, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut tested: Vec<String> = folds.iter().flat_map(|f| f.test.clone()).collect();
            tested.sort();
            prop_assert_eq!(&tested, &all);
            for f in &folds {
                prop_assert_eq!(f.train.len() + f.test.len(), n);
                prop_assert!(f.test.len() >= n / k && f.test.len() <= n.div_ceil(k));
            }
            prop_assert_eq!(split_folds(&all, k, seed).unwrap(), folds);
        }
    }
}
