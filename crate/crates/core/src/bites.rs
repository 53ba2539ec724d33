//! Frame probabilities to bite intervals: argmax, run extraction,
//! same-class consolidation and minimum-duration filtering.

use serde::{Deserialize, Serialize};

use crate::datamodel::{BiteClass, BiteHand, BiteInterval, Class, Hand, LabelSequence};
use crate::model::ProbSequence;

/// Same-class bites separated by at most this gap are merged.
pub const MERGE_GAP_S: f64 = 0.5;

/// Bites shorter than this are dropped.
pub const MIN_BITE_S: f64 = 1.0;

/// Durations come from frame counts divided by the rate; a 16-frame run at
/// 16 Hz must count as exactly 1 s.
const DURATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiteSource {
    Prediction,
    Annotation,
}

/// Time-ordered set of bites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiteSet {
    bites: Vec<BiteInterval>,
    source: BiteSource,
}

impl BiteSet {
    /// Sorts the bites by onset. No other invariant is imposed, so annotation
    /// sets may contain short or touching bites.
    pub fn new(mut bites: Vec<BiteInterval>, source: BiteSource) -> Self {
        sort_bites(&mut bites);
        Self { bites, source }
    }

    pub fn empty(source: BiteSource) -> Self {
        Self {
            bites: Vec::new(),
            source,
        }
    }

    pub fn bites(&self) -> &[BiteInterval] {
        &self.bites
    }

    pub fn into_bites(self) -> Vec<BiteInterval> {
        self.bites
    }

    pub fn source(&self) -> BiteSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.bites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bites.is_empty()
    }

    pub fn of_class(&self, klass: BiteClass) -> impl Iterator<Item = &BiteInterval> {
        self.bites.iter().filter(move |b| b.klass == klass)
    }

    /// Checks the invariants a post-processed prediction set must satisfy.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for w in self.bites.windows(2) {
            if w[0].t_l > w[1].t_l {
                return Err(format!("unsorted at {} > {}", w[0].t_l, w[1].t_l));
            }
        }
        for (i, a) in self.bites.iter().enumerate() {
            if !(a.t_l < a.t_r) {
                return Err(format!("empty bite at {}", a.t_l));
            }
            if self.source == BiteSource::Prediction && a.duration() < MIN_BITE_S - DURATION_TOL {
                return Err(format!("bite [{}, {}] shorter than {MIN_BITE_S} s", a.t_l, a.t_r));
            }
            let next = self.bites[i + 1..]
                .iter()
                .find(|b| b.klass == a.klass && b.hand == a.hand);
            if let Some(b) = next {
                if b.t_l - a.t_r <= MERGE_GAP_S {
                    return Err(format!(
                        "same-class bites [{}, {}] and [{}, {}] not consolidated",
                        a.t_l, a.t_r, b.t_l, b.t_r
                    ));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sort_bites(bites: &mut [BiteInterval]) {
    bites.sort_by(|a, b| {
        a.t_l
            .total_cmp(&b.t_l)
            .then(a.t_r.total_cmp(&b.t_r))
            .then(a.klass.cmp(&b.klass))
            .then(a.hand.cmp(&b.hand))
    });
}

/// Per-frame argmax; ties resolve to the lower class index.
pub fn argmax_labels(probs: &ProbSequence) -> LabelSequence {
    let classes = probs
        .probs()
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = i;
                }
            }
            Class::from_index(best).unwrap_or(Class::Other)
        })
        .collect();
    LabelSequence::new(classes, probs.rate()).expect("probability sequences carry a valid rate")
}

/// Maximal runs of class 1 or 2 as `[first_frame/rate, (last_frame+1)/rate)`.
pub fn extract_runs(labels: &LabelSequence, hand: Hand) -> Vec<BiteInterval> {
    extract_runs_as(labels, BiteHand::from(hand))
}

pub(crate) fn extract_runs_as(labels: &LabelSequence, hand: BiteHand) -> Vec<BiteInterval> {
    let rate = labels.sample_rate_hz();
    let classes = labels.classes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < classes.len() {
        let c = classes[i];
        let mut j = i + 1;
        while j < classes.len() && classes[j] == c {
            j += 1;
        }
        if let Some(klass) = c.bite_class() {
            out.push(BiteInterval {
                t_l: i as f64 / rate,
                t_r: j as f64 / rate,
                klass,
                hand,
            });
        }
        i = j;
    }
    out
}

/// Merges same-class bites whose gap `t_l(next) - t_r(prev)` is at most
/// `gap_s`, transitively. Each class is consolidated on its own, so a bite of
/// the other class in between does not block a merge; bites of different
/// classes are never merged with each other.
pub fn consolidate(intervals: &[BiteInterval], gap_s: f64) -> Vec<BiteInterval> {
    let mut sorted = intervals.to_vec();
    sort_bites(&mut sorted);
    let mut out: Vec<BiteInterval> = Vec::with_capacity(sorted.len());
    let mut open: [Option<usize>; 2] = [None, None];
    for b in sorted {
        let slot = b.klass as usize - 1;
        match open[slot] {
            Some(i) if b.t_l - out[i].t_r <= gap_s => {
                let prev = &mut out[i];
                prev.t_r = prev.t_r.max(b.t_r);
                if prev.hand != b.hand {
                    prev.hand = BiteHand::Merged;
                }
            }
            _ => {
                open[slot] = Some(out.len());
                out.push(b);
            }
        }
    }
    sort_bites(&mut out);
    out
}

/// Drops bites shorter than `min_dur_s`; exactly `min_dur_s` is kept.
pub fn filter_short(intervals: &[BiteInterval], min_dur_s: f64) -> BiteSet {
    let keep = |b: &&BiteInterval| b.duration() >= min_dur_s - DURATION_TOL;
    BiteSet::new(intervals.iter().filter(keep).copied().collect(), BiteSource::Prediction)
}

/// Shifts every bite by `offset_s`.
pub fn shift(bites: &[BiteInterval], offset_s: f64) -> Vec<BiteInterval> {
    bites
        .iter()
        .map(|b| BiteInterval {
            t_l: b.t_l + offset_s,
            t_r: b.t_r + offset_s,
            ..*b
        })
        .collect()
}

/// The fixed post-processing chain: extract, consolidate, then filter.
pub fn detect_from_labels(labels: &LabelSequence, hand: Hand, offset_s: f64) -> BiteSet {
    let runs = shift(&extract_runs(labels, hand), offset_s);
    filter_short(&consolidate(&runs, MERGE_GAP_S), MIN_BITE_S)
}

/// Argmax followed by [`detect_from_labels`].
pub fn detect_bites(probs: &ProbSequence, hand: Hand, offset_s: f64) -> BiteSet {
    detect_from_labels(&argmax_labels(probs), hand, offset_s)
}
