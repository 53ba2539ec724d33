//! Deterministic synthetic recordings with exact ground truth.
//!
//! Each day is colored background noise on both wrists plus one smooth pulse
//! template per gesture. Gesture templates are written in right-wrist
//! coordinates and mirrored for the left wrist, so [`mirror_hand`] maps a
//! left-hand gesture back onto the right-hand template.
//!
//! All bite boundaries fall on the 1/16 s grid, so labels survive
//! decimation to 16 Hz unchanged.
//!
//! [`mirror_hand`]: crate::preprocess::mirror_hand

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bites::{BiteSet, BiteSource};
use crate::datamodel::{
    labels_from_intervals, save_recording, BiteClass, BiteHand, BiteInterval, EatingEpisode, FrameSeries, Hand,
    Recording, MIN_EPISODE_S, NATIVE_RATE_HZ,
};
use crate::episodes::{EpisodeSet, DBSCAN_EPS_S};
use crate::error::{Error, Result};
use crate::preprocess::mirror_in_place;

/// Time grid every generated boundary is snapped to.
const GRID_S: f64 = 1.0 / 16.0;
/// Minimum spacing between consecutive episodes.
pub const MIN_EPISODE_SEPARATION_S: f64 = 240.0;
/// Minimum spacing between snack bites; five bites never fit in one
/// clustering neighborhood.
pub const MIN_SNACK_SPACING_S: f64 = 100.0;
/// Largest in-episode bite spacing that keeps every bite density-reachable.
const MAX_EPISODE_SPACING_S: f64 = 45.0;

fn snap(t: f64) -> f64 {
    (t / GRID_S).round() * GRID_S
}

fn on_grid(t: f64) -> bool {
    (t / GRID_S - (t / GRID_S).round()).abs() < 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EatingStyle {
    /// Fork or spoon: shorter, sharper wrist rotation.
    Utensil,
    /// Finger food: slower, larger lift.
    Hand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub start_s: f64,
    pub duration_s: f64,
    pub speed_bpm: f64,
    pub style: EatingStyle,
    /// Drinking gestures placed between eating bites.
    #[serde(default)]
    pub drinks: usize,
}

impl EpisodeSpec {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn bite_count(&self) -> usize {
        (self.speed_bpm * self.duration_s / 60.0).round() as usize
    }
}

/// A sparse train of eating bites, too thin to form an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnackSpec {
    pub start_s: f64,
    pub bites: usize,
    pub spacing_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub acc_g: f64,
    pub gyro_dps: f64,
    /// AR(1) coefficient of the background noise.
    pub ar: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            acc_g: 0.04,
            gyro_dps: 4.0,
            ar: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureSpec {
    pub min_s: f64,
    pub max_s: f64,
    pub gyro_dps: f64,
    pub acc_g: f64,
    /// Relative amplitude jitter.
    pub jitter: f64,
}

impl Default for GestureSpec {
    fn default() -> Self {
        Self {
            min_s: 1.5,
            max_s: 4.0,
            gyro_dps: 90.0,
            acc_g: 0.5,
            jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub participant_id: String,
    pub day_id: String,
    pub day_duration_s: f64,
    pub episodes: Vec<EpisodeSpec>,
    #[serde(default)]
    pub snacks: Vec<SnackSpec>,
    /// Start times of standalone drinking gestures.
    #[serde(default)]
    pub drinks: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub gesture: GestureSpec,
    pub dominant_hand: Hand,
    /// Probability that a gesture is performed with the non-dominant hand.
    pub nondominant_fraction: f64,
    /// Non-eating wrist movements per hour on each hand.
    #[serde(default)]
    pub distractors_per_hour: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// A quiet day with no gestures.
    pub fn empty(participant_id: &str, day_id: &str, day_duration_s: f64, seed: u64) -> Self {
        Self {
            participant_id: participant_id.to_owned(),
            day_id: day_id.to_owned(),
            day_duration_s,
            episodes: Vec::new(),
            snacks: Vec::new(),
            drinks: Vec::new(),
            noise: NoiseSpec::default(),
            gesture: GestureSpec::default(),
            dominant_hand: Hand::Right,
            nondominant_fraction: 0.0,
            distractors_per_hour: 0.0,
            seed,
        }
    }

    /// Upper bound on the magnitude of any generated sample.
    pub fn amplitude_bound(&self) -> f64 {
        let n = &self.noise;
        let noise = 3f64.sqrt() * n.acc_g.max(n.gyro_dps) * (1.0 - n.ar * n.ar).sqrt() / (1.0 - n.ar);
        let pulse = (1.0 + self.gesture.jitter) * self.gesture.gyro_dps.max(self.gesture.acc_g);
        1.0 + noise + 2.0 * pulse
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.day_duration_s > 0.0) || !on_grid(self.day_duration_s) {
            return bad(format!(
                "day duration {} must be a positive multiple of 1/16 s",
                self.day_duration_s
            ));
        }
        if !(0.0..=1.0).contains(&self.nondominant_fraction) {
            return bad("nondominant_fraction must be in [0, 1]".into());
        }
        let g = &self.gesture;
        if !(g.min_s >= 1.0 && g.max_s >= g.min_s && g.max_s <= 8.0) {
            return bad("gesture durations must satisfy 1 <= min <= max <= 8 s".into());
        }
        if !(0.0..1.0).contains(&self.noise.ar) || self.noise.acc_g < 0.0 || self.noise.gyro_dps < 0.0 {
            return bad("invalid noise parameters".into());
        }
        let mut eps: Vec<&EpisodeSpec> = self.episodes.iter().collect();
        eps.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for e in &eps {
            if !on_grid(e.start_s) || !on_grid(e.duration_s) {
                return bad(format!("episode at {} is not on the 1/16 s grid", e.start_s));
            }
            if e.duration_s < MIN_EPISODE_S {
                return bad(format!("episode at {} shorter than {MIN_EPISODE_S} s", e.start_s));
            }
            if e.start_s < 0.0 || e.end_s() > self.day_duration_s {
                return bad(format!("episode at {} outside the day", e.start_s));
            }
            let n = e.bite_count();
            if n < 5 {
                return bad(format!("episode at {} implies only {n} bites", e.start_s));
            }
            if e.duration_s / (n - 1) as f64 > MAX_EPISODE_SPACING_S {
                return bad(format!("episode at {} is too sparse to cluster", e.start_s));
            }
            if e.duration_s / (n as f64) < g.max_s + 2.0 * g.min_s + 1.0 && e.drinks > 0 {
                return bad(format!("episode at {} is too dense for drinks", e.start_s));
            }
            if e.duration_s / (n as f64) <= g.max_s + 1.0 {
                return bad(format!("episode at {} is too dense for its gestures", e.start_s));
            }
            if e.drinks > n - 1 {
                return bad(format!("episode at {} has more drinks than gaps", e.start_s));
            }
        }
        for w in eps.windows(2) {
            if w[1].start_s < w[0].end_s() {
                return bad(format!("episodes at {} and {} overlap", w[0].start_s, w[1].start_s));
            }
            if w[1].start_s - w[0].end_s() < MIN_EPISODE_SEPARATION_S {
                return bad(format!(
                    "episodes at {} and {} closer than {MIN_EPISODE_SEPARATION_S} s",
                    w[0].start_s, w[1].start_s
                ));
            }
        }
        for s in &self.snacks {
            if s.spacing_s < MIN_SNACK_SPACING_S {
                return bad(format!("snack at {} is dense enough to form an episode", s.start_s));
            }
            for i in 0..s.bites {
                let t = s.start_s + i as f64 * s.spacing_s;
                if t < 0.0 || t + g.max_s > self.day_duration_s {
                    return bad(format!("snack bite at {t} outside the day"));
                }
                let near = eps
                    .iter()
                    .any(|e| t + g.max_s > e.start_s - DBSCAN_EPS_S - 1.0 && t < e.end_s() + DBSCAN_EPS_S + 1.0);
                if near {
                    return bad(format!("snack bite at {t} within clustering reach of an episode"));
                }
            }
        }
        for &d in &self.drinks {
            if d < 0.0 || d + g.max_s > self.day_duration_s {
                return bad(format!("drink at {d} outside the day"));
            }
            if eps.iter().any(|e| d + g.max_s >= e.start_s && d <= e.end_s()) {
                return bad(format!("standalone drink at {d} falls inside an episode"));
            }
        }
        Ok(())
    }
}

/// A generated day and its exact ground truth.
#[derive(Debug, Clone)]
pub struct SynthDay {
    pub spec: SynthSpec,
    /// Carries 64 Hz labels for both hands and ground-truth episodes.
    pub recording: Recording,
    pub bites: BiteSet,
    pub episodes: EpisodeSet,
    /// Ground-truth bites/min per episode.
    pub speeds: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Gesture {
    Bite(BiteClass, EatingStyle),
    Distractor,
}

struct Event {
    t_l: f64,
    t_r: f64,
    hand: Hand,
    gesture: Gesture,
}

fn gesture_duration(rng: &mut ChaCha8Rng, g: &GestureSpec, style: EatingStyle) -> f64 {
    let (lo, hi) = match style {
        EatingStyle::Utensil => (g.min_s, (g.min_s + g.max_s) / 2.0),
        EatingStyle::Hand => ((g.min_s + g.max_s) / 2.0, g.max_s),
    };
    snap(rng.gen_range(lo..=hi)).clamp(g.min_s, g.max_s).max(1.0)
}

fn pick_hand(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Hand {
    if rng.gen::<f64>() < spec.nondominant_fraction {
        spec.dominant_hand.other()
    } else {
        spec.dominant_hand
    }
}

fn plan_events(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let g = &spec.gesture;
    let mut events = Vec::new();
    for e in &spec.episodes {
        let n = e.bite_count();
        let durations: Vec<f64> = (0..n).map(|_| gesture_duration(rng, g, e.style)).collect();
        let last_start = e.end_s() - durations[n - 1];
        let starts: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    e.start_s
                } else if i == n - 1 {
                    last_start
                } else {
                    snap(e.start_s + i as f64 * (last_start - e.start_s) / (n - 1) as f64)
                }
            })
            .collect();
        for i in 0..n {
            events.push(Event {
                t_l: starts[i],
                t_r: starts[i] + durations[i],
                hand: pick_hand(rng, spec),
                gesture: Gesture::Bite(BiteClass::Eating, e.style),
            });
        }
        // Drinks sit in the middle of evenly chosen gaps.
        for k in 0..e.drinks {
            let gap = (k * (n - 1)) / e.drinks.max(1);
            let (a, b) = (starts[gap] + durations[gap], starts[gap + 1]);
            let d = gesture_duration(rng, g, EatingStyle::Hand).min(b - a - 1.0);
            let t_l = snap((a + b - d) / 2.0);
            events.push(Event {
                t_l,
                t_r: t_l + snap(d),
                hand: pick_hand(rng, spec),
                gesture: Gesture::Bite(BiteClass::Drinking, EatingStyle::Hand),
            });
        }
    }
    for s in &spec.snacks {
        for i in 0..s.bites {
            let t_l = snap(s.start_s + i as f64 * s.spacing_s);
            events.push(Event {
                t_l,
                t_r: t_l + gesture_duration(rng, g, EatingStyle::Hand),
                hand: pick_hand(rng, spec),
                gesture: Gesture::Bite(BiteClass::Eating, EatingStyle::Hand),
            });
        }
    }
    for &d in &spec.drinks {
        let t_l = snap(d);
        events.push(Event {
            t_l,
            t_r: t_l + gesture_duration(rng, g, EatingStyle::Hand),
            hand: pick_hand(rng, spec),
            gesture: Gesture::Bite(BiteClass::Drinking, EatingStyle::Hand),
        });
    }
    let n_distract = (spec.distractors_per_hour * spec.day_duration_s / 3600.0).round() as usize;
    for _ in 0..n_distract {
        let d = snap(rng.gen_range(g.min_s..=g.max_s));
        let t_l = snap(rng.gen_range(0.0..(spec.day_duration_s - d).max(0.0)));
        let hand = if rng.gen::<bool>() { Hand::Right } else { Hand::Left };
        let clear = events.iter().all(|e| t_l + d + 2.0 < e.t_l || t_l > e.t_r + 2.0);
        if clear {
            events.push(Event {
                t_l,
                t_r: t_l + d,
                hand,
                gesture: Gesture::Distractor,
            });
        }
    }
    events.sort_by(|a, b| a.t_l.total_cmp(&b.t_l));
    events
}

/// Adds one gesture, in right-wrist coordinates, to `data`.
fn add_template(data: &mut Array2<f64>, ev: &Event, g: &GestureSpec, rng: &mut ChaCha8Rng) {
    let first = (ev.t_l * NATIVE_RATE_HZ).round() as usize;
    let end = ((ev.t_r * NATIVE_RATE_HZ).round() as usize).min(data.nrows());
    let len = (end - first) as f64;
    let amp = 1.0 + rng.gen_range(-g.jitter..=g.jitter);
    let (gy, ac) = (g.gyro_dps * amp, g.acc_g * amp);
    for i in first..end {
        let u = (i - first) as f64 / len;
        let half = (PI * u).sin();
        let full = (2.0 * PI * u).sin();
        let mut row = data.row_mut(i);
        match ev.gesture {
            Gesture::Bite(BiteClass::Eating, style) => {
                let lift = if style == EatingStyle::Hand { 1.2 } else { 1.0 };
                row[3] += gy * half;
                row[1] += 0.6 * ac * lift * half;
                row[2] -= 0.4 * ac * lift * half;
                row[5] += 0.3 * gy * full;
            }
            Gesture::Bite(BiteClass::Drinking, _) => {
                row[4] += gy * half;
                row[0] += 0.7 * ac * half;
                row[2] -= 0.5 * ac * half;
                row[3] += 0.3 * gy * full;
            }
            Gesture::Distractor => {
                row[5] += gy * half;
                row[0] -= 0.4 * ac * full;
            }
        }
    }
}

/// AR(1) noise with bounded innovations on top of a gravity baseline.
fn background(frames: usize, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut data = Array2::zeros((frames, 6));
    let scale = (1.0 - noise.ar * noise.ar).sqrt() * 3f64.sqrt();
    for c in 0..6 {
        let sigma = if c < 3 { noise.acc_g } else { noise.gyro_dps };
        let mut x = 0.0;
        for t in 0..frames {
            x = noise.ar * x + sigma * scale * rng.gen_range(-1.0..=1.0);
            data[[t, c]] = x;
        }
    }
    data.column_mut(2).mapv_inplace(|v| v + 1.0);
    data
}

/// Generates the recording and ground truth described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthDay> {
    spec.validate()?;
    let mut plan_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let events = plan_events(spec, &mut plan_rng);
    let frames = (spec.day_duration_s * NATIVE_RATE_HZ).round() as usize;

    let mut series = Vec::new();
    for hand in [Hand::Right, Hand::Left] {
        let stream = match hand {
            Hand::Right => 1,
            Hand::Left => 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        let mut data = background(frames, &spec.noise, &mut rng);
        let mut gestures = Array2::zeros((frames, 6));
        for ev in events.iter().filter(|e| e.hand == hand) {
            add_template(&mut gestures, ev, &spec.gesture, &mut rng);
        }
        if hand == Hand::Left {
            mirror_in_place(&mut gestures);
        }
        data += &gestures;
        series.push(FrameSeries::new(hand, NATIVE_RATE_HZ, 0.0, data)?);
    }
    let left = series.pop().expect("two hands");
    let right = series.pop().expect("two hands");

    let bites: Vec<BiteInterval> = events
        .iter()
        .filter_map(|e| match e.gesture {
            Gesture::Bite(klass, _) => Some(BiteInterval::new(e.t_l, e.t_r, klass, BiteHand::from(e.hand))),
            Gesture::Distractor => None,
        })
        .collect::<Result<_>>()?;
    let per_hand = |hand: Hand| -> Result<_> {
        let own: Vec<BiteInterval> = bites
            .iter()
            .filter(|b| b.hand == BiteHand::from(hand))
            .copied()
            .collect();
        labels_from_intervals(&own, frames, NATIVE_RATE_HZ)
    };
    let (labels_r, labels_l) = (per_hand(Hand::Right)?, per_hand(Hand::Left)?);

    let mut episodes = Vec::new();
    for e in &spec.episodes {
        let count = bites
            .iter()
            .filter(|b| e.start_s <= b.midpoint() && b.midpoint() <= e.end_s())
            .count();
        episodes.push(EatingEpisode::new(e.start_s, e.end_s())?.with_bite_count(count));
    }
    let episodes = EpisodeSet::new(episodes)?;
    let speeds = episodes
        .episodes()
        .iter()
        .map(|e| e.speed_bites_per_min.expect("count set above"))
        .collect();

    let recording = Recording::new(spec.participant_id.clone(), spec.day_id.clone(), right, left)?
        .with_labels(labels_r, labels_l)?
        .with_episodes(episodes.episodes().to_vec())
        .with_dominant_hand(spec.dominant_hand);
    Ok(SynthDay {
        spec: spec.clone(),
        recording,
        bites: BiteSet::new(bites, BiteSource::Annotation),
        episodes,
        speeds,
    })
}

fn episode(start_min: f64, duration_min: f64, speed_bpm: f64, style: EatingStyle, drinks: usize) -> EpisodeSpec {
    EpisodeSpec {
        start_s: start_min * 60.0,
        duration_s: duration_min * 60.0,
        speed_bpm,
        style,
        drinks,
    }
}

/// Seven participants with two days each: 2 to 8 h, 2 to 6 bites/min,
/// bilateral and single-handed eaters, one left-handed participant, with
/// and without snacks and drinks.
pub fn default_benchmark_suite() -> Vec<SynthSpec> {
    use EatingStyle::{Hand as H, Utensil as U};
    // (participant, dominant, non-dominant fraction, [(hours, episodes, snacks, drinks); 2])
    type Day = (f64, Vec<EpisodeSpec>, Vec<SnackSpec>, Vec<f64>);
    let snack = |start_min: f64, bites: usize| SnackSpec {
        start_s: start_min * 60.0,
        bites,
        spacing_s: 120.0,
    };
    let people: Vec<(&str, Hand, f64, [Day; 2])> = vec![
        (
            "P01",
            Hand::Right,
            0.3,
            [
                (
                    2.0,
                    vec![episode(20.0, 15.0, 3.0, U, 1), episode(80.0, 10.0, 4.0, U, 0)],
                    vec![],
                    vec![3000.0],
                ),
                (
                    4.0,
                    vec![episode(30.0, 20.0, 2.5, U, 2), episode(150.0, 12.0, 5.0, H, 0)],
                    vec![snack(100.0, 3)],
                    vec![],
                ),
            ],
        ),
        (
            "P02",
            Hand::Right,
            0.0,
            [
                (
                    3.0,
                    vec![episode(25.0, 18.0, 2.0, U, 0), episode(120.0, 8.0, 6.0, H, 0)],
                    vec![],
                    vec![500.0, 6000.0],
                ),
                (
                    5.0,
                    vec![episode(40.0, 25.0, 3.5, U, 1), episode(200.0, 10.0, 4.5, H, 0)],
                    vec![snack(120.0, 4)],
                    vec![],
                ),
            ],
        ),
        (
            "P03",
            Hand::Left,
            0.2,
            [
                (
                    6.0,
                    vec![
                        episode(30.0, 20.0, 3.0, U, 1),
                        episode(180.0, 15.0, 4.0, U, 0),
                        episode(300.0, 6.0, 5.5, H, 0),
                    ],
                    vec![snack(100.0, 3)],
                    vec![],
                ),
                (
                    2.5,
                    vec![episode(20.0, 12.0, 2.0, H, 0), episode(100.0, 9.0, 3.0, U, 1)],
                    vec![],
                    vec![4000.0],
                ),
            ],
        ),
        (
            "P04",
            Hand::Right,
            0.5,
            [
                (
                    8.0,
                    vec![
                        episode(60.0, 25.0, 2.5, U, 2),
                        episode(240.0, 20.0, 3.0, U, 1),
                        episode(400.0, 10.0, 5.0, H, 0),
                    ],
                    vec![snack(150.0, 4), snack(320.0, 3)],
                    vec![10000.0],
                ),
                (
                    3.5,
                    vec![episode(30.0, 15.0, 4.0, U, 0), episode(140.0, 6.0, 6.0, H, 0)],
                    vec![],
                    vec![],
                ),
            ],
        ),
        (
            "P05",
            Hand::Right,
            0.1,
            [
                (
                    4.5,
                    vec![episode(45.0, 18.0, 3.5, U, 1), episode(180.0, 12.0, 2.0, H, 0)],
                    vec![snack(110.0, 3)],
                    vec![],
                ),
                (
                    7.0,
                    vec![
                        episode(50.0, 22.0, 3.0, U, 0),
                        episode(200.0, 15.0, 4.5, U, 1),
                        episode(350.0, 8.0, 5.0, H, 0),
                    ],
                    vec![],
                    vec![9000.0],
                ),
            ],
        ),
        (
            "P06",
            Hand::Left,
            0.0,
            [
                (
                    5.5,
                    vec![episode(40.0, 20.0, 2.0, U, 0), episode(200.0, 14.0, 3.5, H, 1)],
                    vec![snack(120.0, 4)],
                    vec![],
                ),
                (
                    2.0,
                    vec![episode(15.0, 10.0, 5.0, U, 0), episode(70.0, 12.0, 2.5, U, 0)],
                    vec![],
                    vec![],
                ),
            ],
        ),
        (
            "P07",
            Hand::Right,
            0.4,
            [
                (
                    6.5,
                    vec![episode(60.0, 16.0, 4.0, U, 1), episode(240.0, 20.0, 2.5, U, 0)],
                    vec![snack(150.0, 5)],
                    vec![300.0],
                ),
                (
                    3.0,
                    vec![episode(20.0, 10.0, 6.0, H, 0), episode(110.0, 15.0, 3.0, U, 1)],
                    vec![],
                    vec![],
                ),
            ],
        ),
    ];
    let mut out = Vec::new();
    for (pi, (pid, dominant, frac, days)) in people.into_iter().enumerate() {
        for (di, (hours, episodes, snacks, drinks)) in days.into_iter().enumerate() {
            out.push(SynthSpec {
                participant_id: pid.to_owned(),
                day_id: format!("d{}", di + 1),
                day_duration_s: hours * 3600.0,
                episodes,
                snacks,
                drinks,
                noise: NoiseSpec::default(),
                gesture: GestureSpec::default(),
                dominant_hand: dominant,
                nondominant_fraction: frac,
                distractors_per_hour: 20.0,
                seed: 1000 + 10 * pi as u64 + di as u64,
            });
        }
    }
    out
}

/// Short half-hour days, one per participant, each with a single
/// ten-minute meal. Meant for smoke tests of the full pipeline.
pub fn compact_suite(participants: usize, seed: u64) -> Vec<SynthSpec> {
    (0..participants)
        .map(|p| {
            let style = if p % 2 == 0 {
                EatingStyle::Utensil
            } else {
                EatingStyle::Hand
            };
            SynthSpec {
                episodes: vec![episode(5.0, 10.0, 2.0 + (p % 4) as f64, style, p % 2)],
                dominant_hand: if p % 3 == 2 { Hand::Left } else { Hand::Right },
                nondominant_fraction: 0.2,
                distractors_per_hour: 20.0,
                ..SynthSpec::empty(&format!("C{:02}", p + 1), "d1", 1800.0, seed.wrapping_add(p as u64))
            }
        })
        .collect()
}

/// A day whose other : eating : drinking label durations follow `ratio`.
/// Eating time is split into 20-minute episodes of fixed-length bites.
pub fn class_ratio_spec(day_duration_s: f64, ratio: [f64; 3], seed: u64) -> SynthSpec {
    let total: f64 = ratio.iter().sum();
    let eat_s = day_duration_s * ratio[1] / total;
    let drink_s = day_duration_s * ratio[2] / total;
    let bite_s = 2.5;
    let n_bites = (eat_s / bite_s).round().max(5.0);
    let n_episodes = (n_bites / 60.0).ceil().max(1.0) as usize;
    let ep_duration = 20.0 * 60.0;
    let per_episode = n_bites / n_episodes as f64;
    let gap = (day_duration_s - n_episodes as f64 * ep_duration) / (n_episodes as f64 + 1.0);
    let episodes: Vec<EpisodeSpec> = (0..n_episodes)
        .map(|i| EpisodeSpec {
            start_s: snap(gap + i as f64 * (ep_duration + gap)),
            duration_s: ep_duration,
            speed_bpm: per_episode / 20.0,
            style: EatingStyle::Utensil,
            drinks: 0,
        })
        .collect();
    let n_drinks = (drink_s / bite_s).round() as usize;
    let mut drinks = Vec::new();
    let step = day_duration_s / (n_drinks as f64 + 1.0);
    let mut t = step;
    while drinks.len() < n_drinks && t < day_duration_s - 10.0 {
        let inside = episodes.iter().any(|e| t + 10.0 >= e.start_s && t <= e.end_s() + 10.0);
        if !inside {
            drinks.push(snap(t));
        }
        t += step / 2.0;
    }
    SynthSpec {
        gesture: GestureSpec {
            min_s: bite_s,
            max_s: bite_s,
            ..GestureSpec::default()
        },
        drinks,
        episodes,
        ..SynthSpec::empty("R01", "d1", day_duration_s, seed)
    }
}

/// Writes each generated day to `<dir>/<participant>_<day>/` in the
/// canonical recording layout.
pub fn write_suite(dir: &Path, specs: &[SynthSpec]) -> Result<Vec<PathBuf>> {
    specs
        .iter()
        .map(|spec| {
            let day = generate(spec)?;
            save_recording(
                &day.recording,
                &dir.join(format!("{}_{}", spec.participant_id, spec.day_id)),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bites::extract_runs;
    use crate::preprocess::mirror_hand;

    fn one_episode() -> SynthSpec {
        SynthSpec {
            episodes: vec![episode(10.0, 10.0, 3.0, EatingStyle::Utensil, 0)],
            ..SynthSpec::empty("P", "d", 1800.0, 5)
        }
    }

    #[test]
    fn ten_minute_episode_at_three_per_minute() {
        let day = generate(&one_episode()).unwrap();
        assert_eq!(day.bites.of_class(BiteClass::Eating).count(), 30);
        assert_eq!(day.speeds, vec![3.0]);
        let e = &day.episodes.episodes()[0];
        assert_eq!((e.t_l, e.t_r), (600.0, 1200.0));
        assert_eq!(day.bites.bites()[0].t_l, 600.0);
        assert_eq!(day.bites.bites().last().unwrap().t_r, 1200.0);
    }

    #[test]
    fn compact_suite_is_valid() {
        let suite = compact_suite(6, 3);
        assert_eq!(suite.len(), 6);
        for spec in &suite {
            let day = generate(spec).unwrap();
            assert_eq!(day.speeds.len(), 1);
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let a = generate(&default_benchmark_suite()[0]).unwrap();
        let b = generate(&default_benchmark_suite()[0]).unwrap();
        assert_eq!(a.recording.right, b.recording.right);
        assert_eq!(a.recording.left, b.recording.left);
        assert_eq!(a.bites, b.bites);
    }

    #[test]
    fn overlapping_episodes_rejected() {
        let mut spec = one_episode();
        spec.episodes.push(episode(15.0, 10.0, 3.0, EatingStyle::Utensil, 0));
        assert!(generate(&spec).is_err());
        let mut spec = one_episode();
        spec.episodes.push(episode(22.0, 5.0, 3.0, EatingStyle::Utensil, 0));
        assert!(generate(&spec).is_err(), "separation below four minutes");
    }

    #[test]
    fn snacks_near_episodes_rejected() {
        let mut spec = one_episode();
        spec.snacks.push(SnackSpec {
            start_s: 1250.0,
            bites: 2,
            spacing_s: 120.0,
        });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn suite_shape() {
        let suite = default_benchmark_suite();
        assert_eq!(suite.len(), 14);
        let hours: Vec<f64> = suite.iter().map(|s| s.day_duration_s / 3600.0).collect();
        assert!(hours.iter().all(|&h| (2.0..=8.0).contains(&h)));
        let speeds: Vec<f64> = suite
            .iter()
            .flat_map(|s| s.episodes.iter().map(|e| e.speed_bpm))
            .collect();
        assert!(speeds.iter().all(|&v| (2.0..=6.0).contains(&v)));
        assert!(suite.iter().any(|s| s.nondominant_fraction == 0.0));
        assert!(suite.iter().any(|s| s.nondominant_fraction > 0.0));
        assert!(suite.iter().any(|s| s.snacks.is_empty()) && suite.iter().any(|s| !s.snacks.is_empty()));
        let mut people: Vec<&str> = suite.iter().map(|s| s.participant_id.as_str()).collect();
        people.dedup();
        assert_eq!(people.len(), 7);
        for spec in &suite {
            spec.validate().unwrap();
            assert!(spec.episodes.iter().all(|e| e.duration_s >= MIN_EPISODE_S));
        }
    }

    #[test]
    fn labels_and_bites_agree() {
        let day = generate(&default_benchmark_suite()[2]).unwrap();
        for hand in [Hand::Right, Hand::Left] {
            let runs = extract_runs(day.recording.labels(hand).unwrap(), hand);
            let own: Vec<BiteInterval> = day
                .bites
                .bites()
                .iter()
                .filter(|b| b.hand == BiteHand::from(hand))
                .copied()
                .collect();
            assert_eq!(runs, own);
        }
    }

    #[test]
    fn signals_are_finite_and_bounded() {
        let spec = &default_benchmark_suite()[1];
        let day = generate(spec).unwrap();
        let bound = spec.amplitude_bound();
        for hand in [Hand::Right, Hand::Left] {
            assert!(day
                .recording
                .series(hand)
                .data()
                .iter()
                .all(|v| v.is_finite() && v.abs() <= bound));
        }
    }

    #[test]
    fn mirrored_left_gesture_matches_right_template() {
        let mut spec = one_episode();
        spec.noise = NoiseSpec {
            acc_g: 0.0,
            gyro_dps: 0.0,
            ar: 0.0,
        };
        spec.gesture.jitter = 0.0;
        spec.dominant_hand = Hand::Left;
        let left_day = generate(&spec).unwrap();
        spec.dominant_hand = Hand::Right;
        let right_day = generate(&spec).unwrap();
        let mirrored = mirror_hand(&left_day.recording.left);
        let a = mirrored.data();
        let b = right_day.recording.right.data();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn class_ratio_close_to_target() {
        let ratio = [142.52, 2.51, 1.0];
        let day = generate(&class_ratio_spec(8.0 * 3600.0, ratio, 3)).unwrap();
        let total = |k: BiteClass| day.bites.of_class(k).map(|b| b.duration()).sum::<f64>();
        let (eat, drink) = (total(BiteClass::Eating), total(BiteClass::Drinking));
        let other = day.spec.day_duration_s - eat - drink;
        let got = [other / drink, eat / drink, 1.0];
        for (g, r) in got.iter().zip(ratio) {
            assert!((g / r - 1.0).abs() <= 0.1, "{got:?}");
        }
    }
}
