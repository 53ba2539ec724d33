use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{class_name, episode_match, f1_score, mape, minute_domain, minute_pairs, pcc, segmental_match, Confusion};
use crate::bites::BiteSet;
use crate::datamodel::{BiteClass, EatingEpisode, Interval, LabelSequence};
use crate::episodes::MinuteSpeedTrack;
use crate::error::Result;

/// IoU thresholds for segmental bite evaluation.
pub const SEGMENT_THRESHOLDS: [f64; 2] = [0.1, 0.5];

/// IoU threshold for episode matching.
pub const EPISODE_THRESHOLD: f64 = 0.5;

const BITE_CLASSES: [BiteClass; 2] = [BiteClass::Eating, BiteClass::Drinking];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SegmentCounts {
    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }

    fn add(&mut self, tp: usize, fp: usize, fn_: usize) {
        self.tp += tp;
        self.fp += fp;
        self.fn_ += fn_;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub iou_sum: f64,
}

impl EpisodeCounts {
    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }

    pub fn mean_iou(&self) -> Option<f64> {
        (self.tp > 0).then(|| self.iou_sum / self.tp as f64)
    }
}

/// Pools raw counts and speed pairs across recordings and folds; metrics are
/// computed once from the pooled values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalAccumulator {
    pub confusion: Confusion,
    /// `[class][threshold]` in [`SEGMENT_THRESHOLDS`] order.
    pub segments: [[SegmentCounts; 2]; 2],
    pub episodes: EpisodeCounts,
    /// `(predicted, ground truth)` speeds of matched episodes.
    pub speed_pairs: Vec<(f64, f64)>,
    pub minute_pairs: Vec<(f64, f64)>,
    pub recordings: usize,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_labels(&mut self, pred: &LabelSequence, gt: &LabelSequence) -> Result<()> {
        self.confusion.add(&Confusion::from_labels(pred, gt)?);
        Ok(())
    }

    pub fn add_bites(&mut self, pred: &BiteSet, gt: &BiteSet) -> Result<()> {
        for (ci, &klass) in BITE_CLASSES.iter().enumerate() {
            for (ki, &k) in SEGMENT_THRESHOLDS.iter().enumerate() {
                let r = segmental_match(pred, gt, klass, k)?;
                self.segments[ci][ki].add(r.tp, r.fp, r.fn_);
            }
        }
        Ok(())
    }

    /// Matches episodes (which must carry speeds) and records speed and
    /// per-minute pairs for every true positive.
    pub fn add_episodes(
        &mut self,
        pred: &[EatingEpisode],
        gt: &[EatingEpisode],
        pred_minutes: &MinuteSpeedTrack,
        gt_minutes: &MinuteSpeedTrack,
    ) -> Result<()> {
        let r = episode_match(pred, gt, EPISODE_THRESHOLD);
        self.episodes.tp += r.tp;
        self.episodes.fp += r.fp;
        self.episodes.fn_ += r.fn_;
        let mut matched_gt: Vec<Interval> = Vec::new();
        for &(g, p, iou) in &r.matches {
            self.episodes.iou_sum += iou;
            matched_gt.push(gt[g].interval());
            if let (Some(sp), Some(sg)) = (pred[p].speed_bites_per_min, gt[g].speed_bites_per_min) {
                if sg > 0.0 {
                    self.speed_pairs.push((sp, sg));
                }
            }
        }
        let domain = minute_domain(gt_minutes, &matched_gt);
        self.minute_pairs
            .extend(minute_pairs(pred_minutes, gt_minutes, &domain)?);
        self.recordings += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &EvalAccumulator) {
        self.confusion.add(&other.confusion);
        for c in 0..2 {
            for k in 0..2 {
                let o = other.segments[c][k];
                self.segments[c][k].add(o.tp, o.fp, o.fn_);
            }
        }
        self.episodes.tp += other.episodes.tp;
        self.episodes.fp += other.episodes.fp;
        self.episodes.fn_ += other.episodes.fn_;
        self.episodes.iou_sum += other.episodes.iou_sum;
        self.speed_pairs.extend_from_slice(&other.speed_pairs);
        self.minute_pairs.extend_from_slice(&other.minute_pairs);
        self.recordings += other.recordings;
    }

    pub fn finish(&self) -> Result<EvalReport> {
        let segmental = BITE_CLASSES
            .iter()
            .enumerate()
            .flat_map(|(ci, &klass)| {
                SEGMENT_THRESHOLDS
                    .iter()
                    .enumerate()
                    .map(move |(ki, &k)| (ci, ki, klass, k))
            })
            .map(|(ci, ki, klass, k)| {
                let c = self.segments[ci][ki];
                SegmentRow {
                    class: klass,
                    threshold: k,
                    tp: c.tp,
                    fp: c.fp,
                    fn_: c.fn_,
                    f1: c.f1(),
                }
            })
            .collect();
        Ok(EvalReport {
            recordings: self.recordings,
            kappa: self.confusion.kappa(),
            segmental,
            episode_tp: self.episodes.tp,
            episode_fp: self.episodes.fp,
            episode_fn: self.episodes.fn_,
            episode_f1: self.episodes.f1(),
            episode_mean_iou: self.episodes.mean_iou(),
            speed_pairs: self.speed_pairs.len(),
            mape: mape(&self.speed_pairs)?,
            pcc: pcc(&self.speed_pairs),
            minute_pairs: self.minute_pairs.len(),
            minute_mape: mape(&self.minute_pairs)?,
            minute_pcc: pcc(&self.minute_pairs),
            provenance: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub class: BiteClass,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
}

/// Final metrics for one evaluation scope (recording, fold or experiment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recordings: usize,
    pub kappa: Option<f64>,
    pub segmental: Vec<SegmentRow>,
    pub episode_tp: usize,
    pub episode_fp: usize,
    pub episode_fn: usize,
    pub episode_f1: f64,
    pub episode_mean_iou: Option<f64>,
    pub speed_pairs: usize,
    pub mape: Option<f64>,
    pub pcc: Option<f64>,
    pub minute_pairs: usize,
    pub minute_mape: Option<f64>,
    pub minute_pcc: Option<f64>,
    /// Ordered `(key, value)` pairs identifying how the report was produced.
    pub provenance: Vec<(String, String)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "absent".into())
}

impl EvalReport {
    pub fn segment(&self, klass: BiteClass, k: f64) -> Option<&SegmentRow> {
        self.segmental.iter().find(|r| r.class == klass && r.threshold == k)
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.provenance.push((key.into(), value.into()));
        self
    }

    /// Human-readable summary. Output is a pure function of the report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluation report");
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "  {k}: {v}");
        }
        let _ = writeln!(s, "recordings: {}", self.recordings);
        let _ = writeln!(s, "cohen kappa: {}", opt(self.kappa));
        let _ = writeln!(s, "segmental bite detection:");
        for r in &self.segmental {
            let _ = writeln!(
                s,
                "  {:<8} k={:.1}  tp={:<6} fp={:<6} fn={:<6} f1={:.6}",
                r.class.as_str(),
                r.threshold,
                r.tp,
                r.fp,
                r.fn_,
                r.f1
            );
        }
        let _ = writeln!(
            s,
            "episodes (k={EPISODE_THRESHOLD:.1}): tp={} fp={} fn={} f1={:.6} mean_iou={}",
            self.episode_tp,
            self.episode_fp,
            self.episode_fn,
            self.episode_f1,
            opt(self.episode_mean_iou)
        );
        let _ = writeln!(
            s,
            "eating speed ({} matched episodes): mape={} pcc={}",
            self.speed_pairs,
            opt(self.mape),
            opt(self.pcc)
        );
        let _ = writeln!(
            s,
            "minute-level speed ({} minutes): mape={} pcc={}",
            self.minute_pairs,
            opt(self.minute_mape),
            opt(self.minute_pcc)
        );
        s
    }

    /// Machine-readable table: `scope,class,threshold,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scope,class,threshold,metric,value\n");
        let mut row = |scope: &str, class: &str, k: &str, metric: &str, v: String| {
            let _ = writeln!(s, "{scope},{class},{k},{metric},{v}");
        };
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        row(
            "frame",
            class_name(crate::datamodel::Class::Other),
            "",
            "kappa",
            o(self.kappa),
        );
        for r in &self.segmental {
            let k = r.threshold.to_string();
            let c = r.class.as_str();
            row("bite", c, &k, "tp", r.tp.to_string());
            row("bite", c, &k, "fp", r.fp.to_string());
            row("bite", c, &k, "fn", r.fn_.to_string());
            row("bite", c, &k, "f1", r.f1.to_string());
        }
        let k = EPISODE_THRESHOLD.to_string();
        row("episode", "eating", &k, "tp", self.episode_tp.to_string());
        row("episode", "eating", &k, "fp", self.episode_fp.to_string());
        row("episode", "eating", &k, "fn", self.episode_fn.to_string());
        row("episode", "eating", &k, "f1", self.episode_f1.to_string());
        row("episode", "eating", &k, "mean_iou", o(self.episode_mean_iou));
        row("speed", "eating", "", "pairs", self.speed_pairs.to_string());
        row("speed", "eating", "", "mape", o(self.mape));
        row("speed", "eating", "", "pcc", o(self.pcc));
        row("minute", "eating", "", "pairs", self.minute_pairs.to_string());
        row("minute", "eating", "", "mape", o(self.minute_mape));
        row("minute", "eating", "", "pcc", o(self.minute_pcc));
        s
    }
}
