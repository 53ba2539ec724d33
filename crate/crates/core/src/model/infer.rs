use ndarray::{s, Array2};

use super::train::renormalize;
use super::{Checkpoint, Model, ProbSequence};
use crate::datamodel::{Hand, Recording, PROCESSED_RATE_HZ};
use crate::error::Result;
use crate::preprocess::{
    combine_hands, combine_labels, downsample, downsample_labels, normalize, window, CombinedSeries, NormStats,
};

/// Downsamples both hands to the processing rate and concatenates them,
/// carrying frame labels when the recording has them.
pub fn prepare_recording(rec: &Recording) -> Result<CombinedSeries> {
    let right = downsample(&rec.right, PROCESSED_RATE_HZ)?;
    let left = downsample(&rec.left, PROCESSED_RATE_HZ)?;
    let combined = combine_hands(&right, &left)?;
    match (&rec.labels_right, &rec.labels_left) {
        (Some(lr), Some(ll)) => {
            let lr = downsample_labels(lr, PROCESSED_RATE_HZ)?;
            let ll = downsample_labels(ll, PROCESSED_RATE_HZ)?;
            combined.with_labels(combine_labels(&lr, &ll))
        }
        _ => Ok(combined),
    }
}

/// A loaded network with its normalization, ready for windowed inference.
#[derive(Debug, Clone)]
pub struct Predictor {
    model: Model<f32>,
    norm: NormStats,
}

impl Predictor {
    pub fn new(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.norm.validate()?;
        Ok(Self {
            model: ckpt.model()?,
            norm: ckpt.norm.clone(),
        })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// Per-frame probabilities for an unnormalized combined series. Windows
    /// advance by half their length and overlapping predictions are
    /// averaged.
    pub fn predict_combined(&self, series: &CombinedSeries) -> Result<Array2<f64>> {
        let frames = self.model.config().window_frames;
        let normed = normalize(series, &self.norm)?;
        let batch = window(&normed, frames, (frames / 2).max(1));
        let outputs: Vec<Array2<f64>> = batch
            .windows
            .iter()
            .map(|w| self.model.infer(w.x.mapv(|v| v as f32).view()).mapv(f64::from))
            .collect();
        let parts: Vec<_> = batch
            .windows
            .iter()
            .zip(&outputs)
            .map(|(w, p)| (w.origin, w.valid, p.view()))
            .collect();
        Ok(renormalize(crate::preprocess::overlap_average(series.len(), 3, &parts)))
    }

    /// Right and left probability sequences on the recording's timeline.
    pub fn predict(&self, rec: &Recording) -> Result<(ProbSequence, ProbSequence)> {
        let combined = prepare_recording(rec)?;
        let probs = self.predict_combined(&combined)?;
        let split = combined.split_index();
        let right = ProbSequence::new(probs.slice(s![..split, ..]).to_owned(), combined.rate(), 0)?
            .with_start_time(rec.right.start_time_s());
        let left = ProbSequence::new(probs.slice(s![split.., ..]).to_owned(), combined.rate(), split)?
            .with_start_time(rec.left.start_time_s());
        Ok((right, left))
    }

    /// Probabilities for one hand on its own.
    pub fn predict_hand(&self, rec: &Recording, hand: Hand) -> Result<ProbSequence> {
        let series = downsample(rec.series(hand), PROCESSED_RATE_HZ)?;
        let combined = CombinedSeries::single(&series);
        let probs = self.predict_combined(&combined)?;
        Ok(ProbSequence::new(probs, combined.rate(), 0)?.with_start_time(series.start_time_s()))
    }
}

/// One-shot [`Predictor::predict`].
pub fn predict(rec: &Recording, ckpt: &Checkpoint) -> Result<(ProbSequence, ProbSequence)> {
    Predictor::new(ckpt)?.predict(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FrameSeries;
    use crate::model::{ModelConfig, TrainMeta};

    fn checkpoint() -> Checkpoint {
        let cfg = ModelConfig {
            layers: 3,
            channels: 8,
            heads: 2,
            head_dim: 4,
            fcn_hidden: 8,
            window_frames: 64,
            ..ModelConfig::default()
        };
        Checkpoint::from_model(&Model::new(&cfg).unwrap(), NormStats::identity(), TrainMeta::default()).unwrap()
    }

    fn recording(frames: usize, value: f64) -> Recording {
        let data = Array2::from_elem((frames, 6), value);
        let r = FrameSeries::new(Hand::Right, 64.0, 0.0, data.clone()).unwrap();
        let l = FrameSeries::new(Hand::Left, 64.0, 0.0, data).unwrap();
        Recording::new("p", "d", r, l).unwrap()
    }

    #[test]
    fn per_hand_lengths_match_processed_frames() {
        let rec = recording(64 * 30 + 3, 0.5);
        let (r, l) = predict(&rec, &checkpoint()).unwrap();
        assert_eq!(r.len(), (64 * 30 + 3) / 4);
        assert_eq!(l.len(), (64 * 30 + 3) / 4);
        assert_eq!(l.origin(), r.len());
        assert_eq!(r.rate(), 16.0);
    }

    #[test]
    fn constant_zero_input_gives_constant_interior_rows() {
        let ck = checkpoint();
        let rf = ck.config.receptive_field();
        let rec = recording(64 * 20, 0.0);
        let p = Predictor::new(&ck).unwrap();
        let probs = p.predict_hand(&rec, Hand::Right).unwrap();
        let probs = probs.probs();
        // Positional encoding varies by frame, so only pointwise parts are
        // time-invariant; check the TCN output instead of full predictions.
        let x = Array2::<f32>::zeros((64, 6));
        let h = p.model().tcn_forward(x.view(), None);
        let half = rf / 2;
        for t in half..64 - half {
            assert_eq!(h.row(t), h.row(half));
        }
        assert!(probs.iter().all(|v| v.is_finite()));
    }
}
