use crate::bites::{detect_bites, detect_from_labels, extract_runs, BiteSet, BiteSource};
use crate::datamodel::{EatingEpisode, Hand, LabelSequence, Recording, PROCESSED_RATE_HZ};
use crate::episodes::{detect_episodes, episode_speed, minute_speed, or_combine, EpisodeParams, MinuteSpeedTrack};
use crate::error::{Error, Result};
use crate::metrics::EvalAccumulator;
use crate::model::{Predictor, ProbSequence};
use crate::preprocess::downsample_labels;

use super::HandsMode;

/// Hands processed for `rec` under `mode`.
pub fn active_hands(rec: &Recording, mode: HandsMode) -> Result<Vec<Hand>> {
    match mode {
        HandsMode::Both => Ok(vec![Hand::Right, Hand::Left]),
        HandsMode::Dominant => rec
            .dominant_hand
            .map(|h| vec![h])
            .ok_or_else(|| Error::invalid(format!("{}: dominant hand unknown", rec.key()))),
    }
}

/// Seconds from the recording's start to the start of `hand`'s series.
fn hand_offset(rec: &Recording, hand: Hand) -> f64 {
    rec.series(hand).start_time_s() - rec.right.start_time_s()
}

/// Per-hand and combined outputs for one recording, on a timeline that
/// starts at the recording's first right-hand frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DayAnalysis {
    pub key: String,
    pub span_s: f64,
    pub labels: Vec<(Hand, LabelSequence)>,
    pub hand_bites: Vec<(Hand, BiteSet)>,
    pub bites: BiteSet,
    /// Episodes with bite counts and speeds.
    pub episodes: Vec<EatingEpisode>,
    pub minutes: MinuteSpeedTrack,
}

impl DayAnalysis {
    /// Runs detection, clustering and speed estimation on per-hand label
    /// tracks.
    pub fn from_labels(rec: &Recording, labels: Vec<(Hand, LabelSequence)>, params: &EpisodeParams) -> Result<Self> {
        let hand_bites: Vec<(Hand, BiteSet)> = labels
            .iter()
            .map(|(h, l)| (*h, detect_from_labels(l, *h, hand_offset(rec, *h))))
            .collect();
        Self::assemble(rec, labels, hand_bites, params)
    }

    /// Full model path: predict, take argmax, detect, cluster.
    pub fn from_predictor(
        rec: &Recording,
        predictor: &Predictor,
        mode: HandsMode,
        params: &EpisodeParams,
    ) -> Result<(Self, Vec<(Hand, ProbSequence)>)> {
        let hands = active_hands(rec, mode)?;
        let (right, left) = predictor.predict(rec)?;
        let probs: Vec<(Hand, ProbSequence)> = [(Hand::Right, right), (Hand::Left, left)]
            .into_iter()
            .filter(|(h, _)| hands.contains(h))
            .collect();
        let labels = probs
            .iter()
            .map(|(h, p)| (*h, crate::bites::argmax_labels(p)))
            .collect();
        let hand_bites = probs
            .iter()
            .map(|(h, p)| (*h, detect_bites(p, *h, hand_offset(rec, *h))))
            .collect();
        Ok((Self::assemble(rec, labels, hand_bites, params)?, probs))
    }

    /// Ground-truth labels, downsampled to the processing rate, in place of
    /// model output.
    pub fn oracle(rec: &Recording, mode: HandsMode, params: &EpisodeParams) -> Result<Self> {
        let hands = active_hands(rec, mode)?;
        let labels = hands
            .into_iter()
            .map(|h| {
                let l = rec
                    .labels(h)
                    .ok_or_else(|| Error::invalid(format!("{}: no annotations", rec.key())))?;
                Ok((h, downsample_labels(l, PROCESSED_RATE_HZ)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(rec, labels, params)
    }

    fn assemble(
        rec: &Recording,
        labels: Vec<(Hand, LabelSequence)>,
        hand_bites: Vec<(Hand, BiteSet)>,
        params: &EpisodeParams,
    ) -> Result<Self> {
        let source = hand_bites.first().map_or(BiteSource::Prediction, |(_, b)| b.source());
        let bites = hand_bites
            .iter()
            .fold(BiteSet::empty(source), |acc, (_, b)| or_combine(&acc, b));
        let span_s = rec.span_s();
        let episodes = detect_episodes(&bites, params);
        let episodes = episode_speed(&bites, episodes.episodes(), params.eating_only_speed)?;
        let minutes = minute_speed(&bites, span_s);
        Ok(Self {
            key: rec.key(),
            span_s,
            labels,
            hand_bites,
            bites,
            episodes,
            minutes,
        })
    }

    pub fn hand_bites(&self, hand: Hand) -> Option<&BiteSet> {
        self.hand_bites.iter().find(|(h, _)| *h == hand).map(|(_, b)| b)
    }
}

/// Reference outputs derived from a recording's annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Per-hand labels at the processing rate.
    pub labels: Vec<(Hand, LabelSequence)>,
    /// Annotated gestures per hand at the native rate.
    pub hand_bites: Vec<(Hand, BiteSet)>,
    pub bites: BiteSet,
    pub episodes: Vec<EatingEpisode>,
    pub minutes: MinuteSpeedTrack,
}

impl GroundTruth {
    /// Episodes come from the recording when annotated, otherwise from
    /// clustering the annotated gestures.
    pub fn from_recording(rec: &Recording, params: &EpisodeParams) -> Result<Self> {
        let mut labels = Vec::new();
        let mut hand_bites = Vec::new();
        for h in [Hand::Right, Hand::Left] {
            let l = rec
                .labels(h)
                .ok_or_else(|| Error::invalid(format!("{}: no annotations", rec.key())))?;
            labels.push((h, downsample_labels(l, PROCESSED_RATE_HZ)?));
            let runs = crate::bites::shift(&extract_runs(l, h), hand_offset(rec, h));
            hand_bites.push((h, BiteSet::new(runs, BiteSource::Annotation)));
        }
        let bites = or_combine(&hand_bites[0].1, &hand_bites[1].1);
        let episodes = match &rec.episodes_gt {
            Some(eps) => {
                let t0 = rec.right.start_time_s();
                let shifted = eps
                    .iter()
                    .map(|e| EatingEpisode::new(e.t_l - t0, e.t_r - t0))
                    .collect::<Result<Vec<_>>>()?;
                episode_speed(&bites, &shifted, params.eating_only_speed)?
            }
            None => episode_speed(
                &bites,
                detect_episodes(&bites, params).episodes(),
                params.eating_only_speed,
            )?,
        };
        let minutes = minute_speed(&bites, rec.span_s());
        Ok(Self {
            labels,
            hand_bites,
            bites,
            episodes,
            minutes,
        })
    }

    pub fn hand_bites(&self, hand: Hand) -> Option<&BiteSet> {
        self.hand_bites.iter().find(|(h, _)| *h == hand).map(|(_, b)| b)
    }

    pub fn labels(&self, hand: Hand) -> Option<&LabelSequence> {
        self.labels.iter().find(|(h, _)| *h == hand).map(|(_, l)| l)
    }
}

/// Adds one recording to `acc`: frame labels and segmental matches for
/// every analyzed hand, then episodes and minute-level speed.
pub fn evaluate_day(pred: &DayAnalysis, gt: &GroundTruth, acc: &mut EvalAccumulator) -> Result<()> {
    for (hand, labels) in &pred.labels {
        let reference = gt.labels(*hand).expect("ground truth covers both hands");
        let n = labels.len().min(reference.len());
        if labels.len().abs_diff(reference.len()) > 1 {
            return Err(Error::LengthMismatch {
                expected: reference.len(),
                actual: labels.len(),
            });
        }
        let cut = |l: &LabelSequence| LabelSequence::new(l.classes()[..n].to_vec(), l.sample_rate_hz());
        acc.add_labels(&cut(labels)?, &cut(reference)?)?;
    }
    for (hand, bites) in &pred.hand_bites {
        acc.add_bites(bites, gt.hand_bites(*hand).expect("ground truth covers both hands"))?;
    }
    acc.add_episodes(&pred.episodes, &gt.episodes, &pred.minutes, &gt.minutes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EvalAccumulator;
    use crate::synth::{generate, EatingStyle, EpisodeSpec, SynthSpec};

    fn day(fraction: f64) -> Recording {
        let spec = SynthSpec {
            episodes: vec![EpisodeSpec {
                start_s: 600.0,
                duration_s: 900.0,
                speed_bpm: 3.0,
                style: EatingStyle::Utensil,
                drinks: 2,
            }],
            nondominant_fraction: fraction,
            ..SynthSpec::empty("P", "d", 2400.0, 9)
        };
        generate(&spec).unwrap().recording
    }

    #[test]
    fn oracle_scores_perfectly() {
        let rec = day(0.4);
        let params = EpisodeParams::default();
        let pred = DayAnalysis::oracle(&rec, HandsMode::Both, &params).unwrap();
        let gt = GroundTruth::from_recording(&rec, &params).unwrap();
        let mut acc = EvalAccumulator::new();
        evaluate_day(&pred, &gt, &mut acc).unwrap();
        let r = acc.finish().unwrap();
        assert_eq!(r.episode_f1, 1.0);
        assert_eq!(r.mape, Some(0.0));
        assert!(r.segmental.iter().all(|s| s.f1 == 1.0));
        let speed = pred.episodes[0].speed_bites_per_min.unwrap();
        assert!((speed - 47.0 / 15.0).abs() < 1e-12, "{speed}");
    }

    #[test]
    fn dominant_mode_is_a_subset() {
        let rec = day(0.4);
        let params = EpisodeParams::default();
        let both = DayAnalysis::oracle(&rec, HandsMode::Both, &params).unwrap();
        let dom = DayAnalysis::oracle(&rec, HandsMode::Dominant, &params).unwrap();
        assert!(dom.bites.len() <= both.bites.len());
        assert_eq!(dom.labels.len(), 1);
    }

    #[test]
    fn right_only_day_same_episodes_in_both_modes() {
        let rec = day(0.0);
        let params = EpisodeParams::default();
        let both = DayAnalysis::oracle(&rec, HandsMode::Both, &params).unwrap();
        let dom = DayAnalysis::oracle(&rec, HandsMode::Dominant, &params).unwrap();
        assert_eq!(both.episodes, dom.episodes);
    }

    #[test]
    fn unknown_dominant_hand_rejected() {
        let mut rec = day(0.0);
        rec.dominant_hand = None;
        assert!(DayAnalysis::oracle(&rec, HandsMode::Dominant, &EpisodeParams::default()).is_err());
        assert!(DayAnalysis::oracle(&rec, HandsMode::Both, &EpisodeParams::default()).is_ok());
    }
}
