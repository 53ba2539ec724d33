use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, TrainMeta};
use super::loss::{loss_and_grad, LossNorm, LossValue};
use super::optim::Adam;
use super::{Model, ModelConfig, ProbSequence, Real};
use crate::bites::{detect_bites, extract_runs, BiteSet, BiteSource};
use crate::datamodel::{BiteClass, Hand, LabelSequence, PROCESSED_RATE_HZ};
use crate::error::{Error, Result};
use crate::metrics::{f1_score, segmental_match};
use crate::preprocess::{NormStats, WindowBatch};

/// Validation threshold used for early stopping.
const EARLY_STOP_IOU: f64 = 0.1;

/// Salt so the shuffling/dropout stream differs from the init stream.
const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    pub val_f1: Option<f64>,
}

struct Sample {
    x: Array2<f32>,
    y: Vec<u8>,
    valid: usize,
}

fn samples(batch: &WindowBatch) -> Result<Vec<Sample>> {
    batch
        .windows
        .iter()
        .map(|w| {
            let y =
                w.y.clone()
                    .ok_or_else(|| Error::invalid("training windows must carry labels"))?;
            Ok(Sample {
                x: w.x.mapv(|v| v as f32),
                y,
                valid: w.valid,
            })
        })
        .collect()
}

/// Pooled eating segmental F1 at IoU 0.1 over the windows of `val`, each
/// window treated as its own short recording.
pub fn validation_f1<F: Real>(model: &Model<F>, val: &WindowBatch) -> Result<f64> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for w in &val.windows {
        let Some(y) = &w.y else {
            return Err(Error::invalid("validation windows must carry labels"));
        };
        if w.valid == 0 {
            continue;
        }
        let x = w.x.slice(s![..w.valid, ..]).mapv(F::of);
        let probs = model.infer(x.view()).mapv(|v| v.to_f64());
        let probs = ProbSequence::new(renormalize(probs), PROCESSED_RATE_HZ, 0)?;
        let pred = detect_bites(&probs, Hand::Right, 0.0);
        let labels = LabelSequence::from_raw(&y[..w.valid], PROCESSED_RATE_HZ)?;
        let gt = BiteSet::new(extract_runs(&labels, Hand::Right), BiteSource::Annotation);
        let m = segmental_match(&pred, &gt, BiteClass::Eating, EARLY_STOP_IOU)?;
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
    }
    Ok(f1_score(tp, fp, fn_))
}

/// Rows from single precision can drift past the 1e-5 sum tolerance only
/// through rounding; rescale in double precision.
pub(crate) fn renormalize(mut probs: Array2<f64>) -> Array2<f64> {
    for mut row in probs.outer_iter_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// [`train_with_observer`] without progress reporting.
pub fn train(train: &WindowBatch, val: &WindowBatch, cfg: &ModelConfig, norm: &NormStats) -> Result<Checkpoint> {
    train_with_observer(train, val, cfg, norm, &mut |_| {})
}

/// Adam training with early stopping on validation eating F1. Without
/// validation windows the training loss is tracked instead. Returns the
/// best epoch's weights.
pub fn train_with_observer(
    train: &WindowBatch,
    val: &WindowBatch,
    cfg: &ModelConfig,
    norm: &NormStats,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<Checkpoint> {
    cfg.validate()?;
    norm.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let data = samples(train)?;
    let mut model = Model::<f32>::new(cfg)?;
    let mut adam = Adam::new(cfg.lr, &model.params());
    let loss_cfg = cfg.loss_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_STREAM);

    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let visit = cfg.windows_per_epoch.map_or(order.len(), |n| n.min(order.len()));
        let mut epoch_loss = LossValue::default();
        let mut batches = 0usize;
        for (step, chunk) in order[..visit].chunks(cfg.batch_size).enumerate() {
            let mut norm_b = LossNorm::default();
            for &i in chunk {
                norm_b.add(LossNorm::for_window(&data[i].y, data[i].valid, &loss_cfg));
            }
            if norm_b.ce == 0.0 {
                continue;
            }
            let mut grads = model.zero_grads();
            let mut batch_loss = LossValue::default();
            for &i in chunk {
                let s = &data[i];
                if s.valid == 0 {
                    continue;
                }
                let (logits, cache) = model.forward(s.x.view(), Some(&mut rng));
                let (value, dlogits) = loss_and_grad(logits.view(), &s.y, s.valid, &loss_cfg, norm_b)?;
                model.backward(&cache, dlogits.view(), &mut grads);
                batch_loss.add(value);
            }
            if !batch_loss.total.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: batch_loss.total,
                });
            }
            adam.update(model.params_mut(), &grads);
            epoch_loss.add(batch_loss);
            batches += 1;
        }
        let batches = batches.max(1) as f64;
        let val_f1 = if val.is_empty() {
            None
        } else {
            Some(validation_f1(&model, val)?)
        };
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss.total / batches,
            train_ce: epoch_loss.ce / batches,
            val_f1,
        };
        observer(&stats);
        let score = val_f1.unwrap_or(-stats.train_loss);
        history.push(stats);
        if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (score, best_epoch, best_model) = best.expect("at least one epoch runs");
    let meta = TrainMeta {
        epochs_run: history.len(),
        best_epoch,
        best_val_f1: if val.is_empty() { None } else { Some(score) },
        train_windows: data.len(),
        val_windows: val.len(),
        history,
    };
    Checkpoint::from_model(&best_model, norm.clone(), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Window;
    use rand::Rng;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            layers: 3,
            channels: 8,
            heads: 2,
            head_dim: 4,
            fcn_hidden: 8,
            window_frames: 48,
            batch_size: 4,
            max_epochs: 3,
            patience: 2,
            seed: 9,
            lr: 5e-3,
            ..ModelConfig::default()
        }
    }

    fn toy_batch(n: usize, seed: u64) -> WindowBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let windows = (0..n)
            .map(|_| {
                let mut x = Array2::from_shape_fn((48, 6), |_| rng.gen_range(-0.2..0.2));
                let mut y = vec![0u8; 48];
                let start = rng.gen_range(0..30);
                for t in start..start + 16 {
                    x[[t, 3]] += 2.0;
                    y[t] = 1;
                }
                Window {
                    x,
                    y: Some(y),
                    origin: 0,
                    valid: 48,
                }
            })
            .collect();
        WindowBatch { windows, frames: 48 }
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let cfg = toy_config();
        let a = train(&toy_batch(8, 1), &toy_batch(2, 2), &cfg, &NormStats::identity()).unwrap();
        let b = train(&toy_batch(8, 1), &toy_batch(2, 2), &cfg, &NormStats::identity()).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    }

    #[test]
    fn unlabeled_or_empty_training_set_is_rejected() {
        let cfg = toy_config();
        let empty = WindowBatch::default();
        assert!(train(&empty, &empty, &cfg, &NormStats::identity()).is_err());
        let mut b = toy_batch(1, 3);
        b.windows[0].y = None;
        assert!(train(&b, &empty, &cfg, &NormStats::identity()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = toy_config();
        cfg.max_epochs = 1;
        let mut b = toy_batch(2, 4);
        b.windows[0].x[[0, 0]] = f64::NAN;
        let err = train(&b, &WindowBatch::default(), &cfg, &NormStats::identity()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn observer_sees_every_epoch() {
        let cfg = ModelConfig {
            patience: 100,
            ..toy_config()
        };
        let mut seen = Vec::new();
        let ck = train_with_observer(
            &toy_batch(4, 5),
            &WindowBatch::default(),
            &cfg,
            &NormStats::identity(),
            &mut |s| seen.push(s.epoch),
        )
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
        assert_eq!(ck.meta.epochs_run, 3);
        assert!(ck.meta.best_val_f1.is_none());
    }
}
