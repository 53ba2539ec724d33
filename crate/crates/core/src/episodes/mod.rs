//! Eating episodes from bites: two-hand OR combination, density clustering
//! of eating gestures, merge/prune rules, and episode- and minute-level
//! eating speed.

mod dbscan;

pub use dbscan::dbscan_1d;

use serde::{Deserialize, Serialize};

use crate::bites::{sort_bites, BiteSet};
use crate::datamodel::{BiteClass, BiteHand, BiteInterval, EatingEpisode, Interval, MIN_EPISODE_S};
use crate::error::{Error, Result};

/// Neighborhood radius for clustering, in seconds.
pub const DBSCAN_EPS_S: f64 = 180.0;
/// Minimum neighborhood size (self included) of a core bite.
pub const DBSCAN_MIN_SAMPLES: usize = 5;
/// Episodes closer than this are merged.
pub const MERGE_EPISODE_GAP_S: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub eps_s: f64,
    pub min_samples: usize,
    pub merge_gap_s: f64,
    pub min_duration_s: f64,
    /// Count only eating gestures toward speed.
    pub eating_only_speed: bool,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            eps_s: DBSCAN_EPS_S,
            min_samples: DBSCAN_MIN_SAMPLES,
            merge_gap_s: MERGE_EPISODE_GAP_S,
            min_duration_s: MIN_EPISODE_S,
            eating_only_speed: false,
        }
    }
}

/// Time-ordered, pairwise separated episodes of at least three minutes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSet {
    episodes: Vec<EatingEpisode>,
}

impl EpisodeSet {
    pub fn new(mut episodes: Vec<EatingEpisode>) -> Result<Self> {
        episodes.sort_by(|a, b| a.t_l.total_cmp(&b.t_l));
        for e in &episodes {
            if e.duration() < MIN_EPISODE_S {
                return Err(Error::invalid(format!(
                    "episode [{}, {}] shorter than 3 min",
                    e.t_l, e.t_r
                )));
            }
        }
        for w in episodes.windows(2) {
            if w[1].t_l - w[0].t_r < MERGE_EPISODE_GAP_S {
                return Err(Error::invalid(format!(
                    "episodes [{}, {}] and [{}, {}] are closer than 3 min",
                    w[0].t_l, w[0].t_r, w[1].t_l, w[1].t_r
                )));
            }
        }
        Ok(Self { episodes })
    }

    pub fn episodes(&self) -> &[EatingEpisode] {
        &self.episodes
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.episodes.iter().map(EatingEpisode::interval).collect()
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Bites counted per one-minute bin, keyed by bite midpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteSpeedTrack {
    counts: Vec<u32>,
}

impl MinuteSpeedTrack {
    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Union of both hands' bites. Overlapping same-class bites from the two
/// hands collapse into one spanning bite tagged `Merged`.
pub fn or_combine(right: &BiteSet, left: &BiteSet) -> BiteSet {
    let mut all: Vec<BiteInterval> = right.bites().iter().chain(left.bites()).copied().collect();
    sort_bites(&mut all);
    let mut out: Vec<BiteInterval> = Vec::with_capacity(all.len());
    let mut open: [Option<usize>; 2] = [None, None];
    for b in all {
        let slot = b.klass as usize - 1;
        match open[slot] {
            Some(i) if b.t_l < out[i].t_r => {
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
    BiteSet::new(out, right.source())
}

/// Clusters eating-gesture midpoints with 1D DBSCAN. Drinking gestures are
/// discarded first. Returns each cluster's `[min t_l, max t_r]`, time-ordered.
pub fn cluster_episodes(bites: &BiteSet, eps_s: f64, min_samples: usize) -> Vec<Interval> {
    let eating: Vec<&BiteInterval> = bites.of_class(BiteClass::Eating).collect();
    let mids: Vec<f64> = eating.iter().map(|b| b.midpoint()).collect();
    let labels = dbscan_1d(&mids, eps_s, min_samples);
    let n_clusters = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut bounds = vec![
        Interval {
            t_l: f64::INFINITY,
            t_r: f64::NEG_INFINITY,
        };
        n_clusters
    ];
    for (b, label) in eating.iter().zip(&labels) {
        if let Some(c) = *label {
            bounds[c].t_l = bounds[c].t_l.min(b.t_l);
            bounds[c].t_r = bounds[c].t_r.max(b.t_r);
        }
    }
    bounds.sort_by(|a, b| a.t_l.total_cmp(&b.t_l));
    bounds
}

/// Merges candidates whose gap is below `merge_gap_s` (transitively), then
/// removes any result shorter than `min_duration_s`.
pub fn merge_and_prune(candidates: &[Interval], merge_gap_s: f64, min_duration_s: f64) -> Vec<Interval> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.t_l.total_cmp(&b.t_l).then(a.t_r.total_cmp(&b.t_r)));
    let mut merged: Vec<Interval> = Vec::with_capacity(sorted.len());
    for c in sorted {
        match merged.last_mut() {
            Some(prev) if c.t_l - prev.t_r < merge_gap_s => prev.t_r = prev.t_r.max(c.t_r),
            _ => merged.push(c),
        }
    }
    merged.retain(|e| e.duration() >= min_duration_s);
    merged
}

/// Clustering followed by merge/prune with the given parameters.
pub fn detect_episodes(bites: &BiteSet, params: &EpisodeParams) -> EpisodeSet {
    let candidates = cluster_episodes(bites, params.eps_s, params.min_samples);
    let kept = merge_and_prune(&candidates, params.merge_gap_s, params.min_duration_s);
    let episodes = kept
        .into_iter()
        .map(|iv| EatingEpisode {
            t_l: iv.t_l,
            t_r: iv.t_r,
            bite_count: None,
            speed_bites_per_min: None,
        })
        .collect();
    EpisodeSet { episodes }
}

/// Counts bites whose midpoint lies in each episode and derives
/// bites/minute. Drinking gestures count unless `eating_only`.
pub fn episode_speed(bites: &BiteSet, episodes: &[EatingEpisode], eating_only: bool) -> Result<Vec<EatingEpisode>> {
    episodes
        .iter()
        .map(|e| {
            if !(e.duration() > 0.0) {
                return Err(Error::invalid(format!("zero-duration episode at {}", e.t_l)));
            }
            let iv = e.interval();
            let count = bites
                .bites()
                .iter()
                .filter(|b| !eating_only || b.klass == BiteClass::Eating)
                .filter(|b| iv.contains(b.midpoint()))
                .count();
            Ok(e.with_bite_count(count))
        })
        .collect()
}

/// Bites per one-minute bin over `[0, span_s)`, by midpoint.
pub fn minute_speed(bites: &BiteSet, span_s: f64) -> MinuteSpeedTrack {
    let bins = (span_s / 60.0).ceil().max(0.0) as usize;
    let mut counts = vec![0u32; bins];
    if bins > 0 {
        for b in bites.bites() {
            let m = (b.midpoint() / 60.0).floor().max(0.0) as usize;
            counts[m.min(bins - 1)] += 1;
        }
    }
    MinuteSpeedTrack { counts }
}
