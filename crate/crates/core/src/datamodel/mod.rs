//! Domain types shared by every stage of the pipeline.
//!
//! All values are immutable after construction and validate their invariants
//! in their constructors. Time is measured in seconds from the recording
//! origin.

mod io;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_recording, read_bites_csv, read_episodes_csv, read_meta, read_minute_csv, save_recording, write_bites_csv,
    write_episodes_csv, write_minute_csv, RecordingMeta,
};

/// Number of inertial channels per hand.
pub const N_CHANNELS: usize = 6;

/// Channel names in storage order: accelerometer (g) then gyroscope (deg/s).
pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["ax", "ay", "az", "gx", "gy", "gz"];

/// Native sample rate of the wristbands.
pub const NATIVE_RATE_HZ: f64 = 64.0;

/// Rate the network operates on.
pub const PROCESSED_RATE_HZ: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Hand::Left),
            "right" | "r" => Ok(Hand::Right),
            other => Err(Error::invalid(format!("unknown hand {other:?}"))),
        }
    }
}

/// A uniformly sampled 6-channel inertial signal from one wrist.
///
/// Frame `i` occurs at `start_time_s + i / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    hand: Hand,
    sample_rate_hz: f64,
    start_time_s: f64,
    data: Array2<f64>,
}

impl FrameSeries {
    /// `data` is `T x 6` in [`CHANNEL_NAMES`] order.
    pub fn new(hand: Hand, sample_rate_hz: f64, start_time_s: f64, data: Array2<f64>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        if data.ncols() != N_CHANNELS {
            return Err(Error::invalid(format!(
                "expected {N_CHANNELS} channels, got {}",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::invalid("frame series must contain at least one frame"));
        }
        Ok(Self {
            hand,
            sample_rate_hz,
            start_time_s,
            data,
        })
    }

    /// Builds a series from six equally long channel tracks.
    pub fn from_channels(
        hand: Hand,
        sample_rate_hz: f64,
        start_time_s: f64,
        channels: [&[f64]; N_CHANNELS],
    ) -> Result<Self> {
        let len = channels[0].len();
        for ch in &channels[1..] {
            if ch.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    actual: ch.len(),
                });
            }
        }
        let data = Array2::from_shape_fn((len, N_CHANNELS), |(t, c)| channels[c][t]);
        Self::new(hand, sample_rate_hz, start_time_s, data)
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.data.index_axis(Axis(1), c)
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s()
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        self.start_time_s + frame as f64 / self.sample_rate_hz
    }

    pub fn with_hand(mut self, hand: Hand) -> Self {
        self.hand = hand;
        self
    }

    pub(crate) fn with_data(&self, sample_rate_hz: f64, data: Array2<f64>) -> Result<Self> {
        Self::new(self.hand, sample_rate_hz, self.start_time_s, data)
    }
}

/// Per-frame class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    #[default]
    Other = 0,
    Eating = 1,
    Drinking = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Other, Class::Eating, Class::Drinking];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Class::ALL.get(i).copied()
    }

    pub fn bite_class(self) -> Option<BiteClass> {
        match self {
            Class::Other => None,
            Class::Eating => Some(BiteClass::Eating),
            Class::Drinking => Some(BiteClass::Drinking),
        }
    }
}

impl TryFrom<u8> for Class {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Class::from_index(v as usize).ok_or_else(|| Error::invalid(format!("class {v} not in {{0,1,2}}")))
    }
}

/// Per-frame class track aligned with a [`FrameSeries`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    classes: Vec<Class>,
    sample_rate_hz: RateKey,
}

// f64 wrapper so LabelSequence can derive Eq; rates are validated finite.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RateKey(f64);
impl Eq for RateKey {}

impl LabelSequence {
    pub fn new(classes: Vec<Class>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            classes,
            sample_rate_hz: RateKey(sample_rate_hz),
        })
    }

    pub fn from_raw(values: &[u8], sample_rate_hz: f64) -> Result<Self> {
        let classes = values.iter().map(|&v| Class::try_from(v)).collect::<Result<Vec<_>>>()?;
        Self::new(classes, sample_rate_hz)
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![Class::Other; len], sample_rate_hz)
    }

    pub fn classes(&self) -> &[Class] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz.0
    }

    pub fn as_u8(&self) -> Vec<u8> {
        self.classes.iter().map(|&c| c as u8).collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz()
    }

    pub fn check_aligned(&self, series: &FrameSeries) -> Result<()> {
        if self.len() != series.len() {
            return Err(Error::LengthMismatch {
                expected: series.len(),
                actual: self.len(),
            });
        }
        if self.sample_rate_hz() != series.sample_rate_hz() {
            return Err(Error::RateMismatch(series.sample_rate_hz(), self.sample_rate_hz()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiteClass {
    Eating = 1,
    Drinking = 2,
}

impl BiteClass {
    pub fn class(self) -> Class {
        match self {
            BiteClass::Eating => Class::Eating,
            BiteClass::Drinking => Class::Drinking,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BiteClass::Eating),
            2 => Some(BiteClass::Drinking),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiteClass::Eating => "eating",
            BiteClass::Drinking => "drinking",
        }
    }
}

impl FromStr for BiteClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "eating" => Ok(BiteClass::Eating),
            "2" | "drinking" => Ok(BiteClass::Drinking),
            other => Err(Error::invalid(format!("unknown bite class {other:?}"))),
        }
    }
}

/// Which wrist a bite was detected on; `Merged` after combining both hands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiteHand {
    Left,
    Right,
    Merged,
}

impl BiteHand {
    pub fn as_str(self) -> &'static str {
        match self {
            BiteHand::Left => "left",
            BiteHand::Right => "right",
            BiteHand::Merged => "merged",
        }
    }
}

impl From<Hand> for BiteHand {
    fn from(h: Hand) -> Self {
        match h {
            Hand::Left => BiteHand::Left,
            Hand::Right => BiteHand::Right,
        }
    }
}

impl FromStr for BiteHand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(BiteHand::Left),
            "right" | "r" => Ok(BiteHand::Right),
            "merged" | "both" | "m" => Ok(BiteHand::Merged),
            other => Err(Error::invalid(format!("unknown hand {other:?}"))),
        }
    }
}

/// One intake gesture `[t_l, t_r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiteInterval {
    pub t_l: f64,
    pub t_r: f64,
    pub klass: BiteClass,
    pub hand: BiteHand,
}

impl BiteInterval {
    pub fn new(t_l: f64, t_r: f64, klass: BiteClass, hand: BiteHand) -> Result<Self> {
        if !(t_l.is_finite() && t_r.is_finite()) {
            return Err(Error::invalid("bite bounds must be finite"));
        }
        if t_l >= t_r {
            return Err(Error::invalid(format!("bite requires t_l < t_r, got [{t_l}, {t_r}]")));
        }
        Ok(Self { t_l, t_r, klass, hand })
    }

    pub fn duration(&self) -> f64 {
        self.t_r - self.t_l
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_l + self.t_r)
    }

    pub fn interval(&self) -> Interval {
        Interval {
            t_l: self.t_l,
            t_r: self.t_r,
        }
    }
}

/// A plain closed time interval, used for episode candidates and matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t_l: f64,
    pub t_r: f64,
}

impl Interval {
    pub fn new(t_l: f64, t_r: f64) -> Self {
        debug_assert!(t_l <= t_r);
        Self { t_l, t_r }
    }

    pub fn duration(&self) -> f64 {
        self.t_r - self.t_l
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_l <= t && t <= self.t_r
    }
}

/// Minimum eating episode length in seconds.
pub const MIN_EPISODE_S: f64 = 180.0;

/// A clustered eating episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EatingEpisode {
    pub t_l: f64,
    pub t_r: f64,
    pub bite_count: Option<usize>,
    pub speed_bites_per_min: Option<f64>,
}

impl EatingEpisode {
    pub fn new(t_l: f64, t_r: f64) -> Result<Self> {
        if !(t_l.is_finite() && t_r.is_finite()) {
            return Err(Error::invalid("episode bounds must be finite"));
        }
        if t_r - t_l < MIN_EPISODE_S {
            return Err(Error::invalid(format!(
                "episode [{t_l}, {t_r}] is shorter than {MIN_EPISODE_S} s"
            )));
        }
        Ok(Self {
            t_l,
            t_r,
            bite_count: None,
            speed_bites_per_min: None,
        })
    }

    /// Attaches a bite count and derives the speed from it.
    pub fn with_bite_count(mut self, count: usize) -> Self {
        self.bite_count = Some(count);
        self.speed_bites_per_min = Some(count as f64 / (self.duration() / 60.0));
        self
    }

    pub fn duration(&self) -> f64 {
        self.t_r - self.t_l
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.t_l, self.t_r)
    }
}

/// One participant-day of dual-wrist data with optional ground truth.
#[derive(Debug, Clone)]
pub struct Recording {
    pub participant_id: String,
    pub day_id: String,
    pub right: FrameSeries,
    pub left: FrameSeries,
    pub labels_right: Option<LabelSequence>,
    pub labels_left: Option<LabelSequence>,
    pub episodes_gt: Option<Vec<EatingEpisode>>,
    pub dominant_hand: Option<Hand>,
}

impl Recording {
    pub fn new(
        participant_id: impl Into<String>,
        day_id: impl Into<String>,
        right: FrameSeries,
        left: FrameSeries,
    ) -> Result<Self> {
        if right.hand() != Hand::Right || left.hand() != Hand::Left {
            return Err(Error::invalid("right/left series carry the wrong hand tag"));
        }
        if right.sample_rate_hz() != left.sample_rate_hz() {
            return Err(Error::RateMismatch(right.sample_rate_hz(), left.sample_rate_hz()));
        }
        let period = 1.0 / right.sample_rate_hz();
        let start_diff = (right.start_time_s() - left.start_time_s()).abs();
        let end_diff = (right.end_time_s() - left.end_time_s()).abs();
        // Strictly less than one period, so a single missing frame is rejected.
        let tol = period * (1.0 - 1e-9);
        if start_diff >= tol || end_diff >= tol {
            return Err(Error::ChannelSpanMismatch {
                right_start: right.start_time_s(),
                right_s: right.duration_s(),
                left_start: left.start_time_s(),
                left_s: left.duration_s(),
            });
        }
        Ok(Self {
            participant_id: participant_id.into(),
            day_id: day_id.into(),
            right,
            left,
            labels_right: None,
            labels_left: None,
            episodes_gt: None,
            dominant_hand: None,
        })
    }

    pub fn with_labels(mut self, right: LabelSequence, left: LabelSequence) -> Result<Self> {
        right.check_aligned(&self.right)?;
        left.check_aligned(&self.left)?;
        self.labels_right = Some(right);
        self.labels_left = Some(left);
        Ok(self)
    }

    pub fn with_episodes(mut self, episodes: Vec<EatingEpisode>) -> Self {
        self.episodes_gt = Some(episodes);
        self
    }

    pub fn with_dominant_hand(mut self, hand: Hand) -> Self {
        self.dominant_hand = Some(hand);
        self
    }

    pub fn series(&self, hand: Hand) -> &FrameSeries {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn labels(&self, hand: Hand) -> Option<&LabelSequence> {
        match hand {
            Hand::Left => self.labels_left.as_ref(),
            Hand::Right => self.labels_right.as_ref(),
        }
    }

    pub fn span_s(&self) -> f64 {
        self.right.duration_s().max(self.left.duration_s())
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.participant_id, self.day_id)
    }
}

/// Rasterizes bite intervals onto a frame grid.
///
/// Frame `i` gets class `c` iff `i / rate` lies in `[t_l, t_r)` of a class-`c`
/// interval. Same-class overlaps are allowed; overlaps of different classes
/// are rejected.
pub fn labels_from_intervals(intervals: &[BiteInterval], frames: usize, rate: f64) -> Result<LabelSequence> {
    let mut sorted: Vec<&BiteInterval> = intervals.iter().collect();
    sorted.sort_by(|a, b| a.t_l.total_cmp(&b.t_l));
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b.t_l >= a.t_r {
                break;
            }
            if a.klass != b.klass {
                return Err(Error::ConflictingIntervals(a.t_l, a.t_r, b.t_l, b.t_r));
            }
        }
    }

    let mut classes = vec![Class::Other; frames];
    for iv in intervals {
        let (first, end) = frame_range(iv.t_l, iv.t_r, rate, frames);
        for c in &mut classes[first..end] {
            *c = iv.klass.class();
        }
    }
    LabelSequence::new(classes, rate)
}

/// Half-open frame range `[first, end)` whose timestamps fall in `[t_l, t_r)`.
pub(crate) fn frame_range(t_l: f64, t_r: f64, rate: f64, frames: usize) -> (usize, usize) {
    // Absorb rounding noise in `t * rate` for frame-aligned boundaries.
    const SLACK: f64 = 1e-9;
    let first = (t_l * rate - SLACK).ceil().max(0.0) as usize;
    let end = (t_r * rate - SLACK).ceil().max(0.0) as usize;
    (first.min(frames), end.min(frames).max(first.min(frames)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bite(t_l: f64, t_r: f64, klass: BiteClass) -> BiteInterval {
        BiteInterval::new(t_l, t_r, klass, BiteHand::Right).unwrap()
    }

    #[test]
    fn empty_annotation_rasterizes_to_zeros() {
        let l = labels_from_intervals(&[], 10, 16.0).unwrap();
        assert_eq!(l.len(), 10);
        assert!(l.classes().iter().all(|&c| c == Class::Other));
    }

    #[test]
    fn one_second_eating_interval_at_16hz() {
        let l = labels_from_intervals(&[bite(1.0, 2.0, BiteClass::Eating)], 48, 16.0).unwrap();
        for (i, &c) in l.classes().iter().enumerate() {
            let expected = if (16..=31).contains(&i) {
                Class::Eating
            } else {
                Class::Other
            };
            assert_eq!(c, expected, "frame {i}");
        }
    }

    #[test]
    fn conflicting_overlap_rejected() {
        let err = labels_from_intervals(
            &[bite(1.0, 2.0, BiteClass::Eating), bite(1.5, 3.0, BiteClass::Drinking)],
            64,
            16.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConflictingIntervals(..)));
    }

    #[test]
    fn touching_different_classes_allowed() {
        let l = labels_from_intervals(
            &[bite(1.0, 2.0, BiteClass::Eating), bite(2.0, 3.0, BiteClass::Drinking)],
            64,
            16.0,
        )
        .unwrap();
        assert_eq!(l.classes()[31], Class::Eating);
        assert_eq!(l.classes()[32], Class::Drinking);
    }

    #[test]
    fn bite_requires_ordered_bounds() {
        assert!(BiteInterval::new(5.0, 4.0, BiteClass::Eating, BiteHand::Left).is_err());
        assert!(BiteInterval::new(5.0, 5.0, BiteClass::Eating, BiteHand::Left).is_err());
    }

    #[test]
    fn episode_speed_from_count() {
        let e = EatingEpisode::new(0.0, 600.0).unwrap().with_bite_count(30);
        assert_eq!(e.speed_bites_per_min, Some(3.0));
        assert!(EatingEpisode::new(0.0, 179.0).is_err());
    }

    #[test]
    fn span_mismatch_of_one_frame_rejected() {
        let r = FrameSeries::new(Hand::Right, 64.0, 0.0, Array2::zeros((100, 6))).unwrap();
        let l = FrameSeries::new(Hand::Left, 64.0, 0.0, Array2::zeros((99, 6))).unwrap();
        let err = Recording::new("p", "d", r, l).unwrap_err();
        assert!(err.to_string().contains("channel span mismatch"));
    }

    #[test]
    fn frame_series_invariants() {
        assert!(FrameSeries::new(Hand::Right, 0.0, 0.0, Array2::zeros((4, 6))).is_err());
        assert!(FrameSeries::new(Hand::Right, 64.0, 0.0, Array2::zeros((0, 6))).is_err());
        assert!(FrameSeries::new(Hand::Right, 64.0, 0.0, Array2::zeros((4, 5))).is_err());
        let s = FrameSeries::new(Hand::Right, 64.0, 2.0, Array2::zeros((64, 6))).unwrap();
        assert_eq!(s.time_of(32), 2.5);
    }
}
