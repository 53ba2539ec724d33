//! Evaluation: frame-level Cohen's kappa, segmental F1 at IoU thresholds,
//! episode matching with mean IoU, and MAPE / Pearson correlation of eating
//! speed.

mod report;

pub use report::{EpisodeCounts, EvalAccumulator, EvalReport, SegmentCounts, EPISODE_THRESHOLD, SEGMENT_THRESHOLDS};

use serde::{Deserialize, Serialize};

use crate::bites::BiteSet;
use crate::datamodel::{BiteClass, Class, EatingEpisode, Interval, LabelSequence};
use crate::episodes::MinuteSpeedTrack;
use crate::error::{Error, Result};

/// 3x3 confusion matrix, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 3]; 3]);

impl Confusion {
    pub fn from_labels(pred: &LabelSequence, gt: &LabelSequence) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::LengthMismatch {
                expected: gt.len(),
                actual: pred.len(),
            });
        }
        let mut m = [[0u64; 3]; 3];
        for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
            m[g.index()][p.index()] += 1;
        }
        Ok(Self(m))
    }

    pub fn add(&mut self, other: &Confusion) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// `(p_o - p_e) / (1 - p_e)`; the degenerate `p_e = 1` case (both
    /// tracks constant and identical) is 1.0. `None` on an empty matrix.
    pub fn kappa(&self) -> Option<f64> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let n = n as f64;
        let observed = (0..3).map(|i| self.0[i][i]).sum::<u64>() as f64 / n;
        let expected = (0..3)
            .map(|i| {
                let row: u64 = self.0[i].iter().sum();
                let col: u64 = (0..3).map(|r| self.0[r][i]).sum();
                row as f64 * col as f64
            })
            .sum::<f64>()
            / (n * n);
        if expected >= 1.0 {
            return Some(1.0);
        }
        Some((observed - expected) / (1.0 - expected))
    }
}

/// Multi-class Cohen's kappa between two equally long label tracks.
pub fn cohen_kappa(pred: &LabelSequence, gt: &LabelSequence) -> Result<f64> {
    Confusion::from_labels(pred, gt)?
        .kappa()
        .ok_or_else(|| Error::invalid("kappa of empty sequences"))
}

/// `|a ∩ b| / |a ∪ b|`, 0 for disjoint or touching intervals.
pub fn interval_iou(a: Interval, b: Interval) -> f64 {
    let inter = (a.t_r.min(b.t_r) - a.t_l.max(b.t_l)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.duration() + b.duration() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// Outcome of one-to-one segment matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(gt index, pred index, IoU)` for every true positive.
    pub matches: Vec<(usize, usize, f64)>,
    pub f1: f64,
}

pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

impl MatchResult {
    pub fn mean_iou(&self) -> Option<f64> {
        if self.matches.is_empty() {
            None
        } else {
            Some(self.matches.iter().map(|m| m.2).sum::<f64>() / self.matches.len() as f64)
        }
    }
}

/// Greedy matching: predictions are scanned by onset; each takes its
/// best-IoU unmatched ground truth (lowest index on ties) and is a true
/// positive iff that IoU reaches `k`.
pub fn match_intervals(preds: &[Interval], gts: &[Interval], k: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].t_l.total_cmp(&preds[b].t_l).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut matches = Vec::new();
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = interval_iou(preds[p], *gt);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            if iou >= k && iou > 0.0 {
                taken[g] = true;
                matches.push((g, p, iou));
            }
        }
    }
    let tp = matches.len();
    let fp = preds.len() - tp;
    let fn_ = gts.len() - tp;
    MatchResult {
        tp,
        fp,
        fn_,
        matches,
        f1: f1_score(tp, fp, fn_),
    }
}

/// Class-restricted segmental matching of bites; bites of the other class
/// are background. Indices in `matches` refer to the full input sets.
pub fn segmental_match(preds: &BiteSet, gts: &BiteSet, klass: BiteClass, k: f64) -> Result<MatchResult> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::invalid(format!("threshold {k} outside (0, 1]")));
    }
    let pick = |set: &BiteSet| -> (Vec<usize>, Vec<Interval>) {
        set.bites()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.klass == klass)
            .map(|(i, b)| (i, b.interval()))
            .unzip()
    };
    let (p_idx, p_iv) = pick(preds);
    let (g_idx, g_iv) = pick(gts);
    let mut r = match_intervals(&p_iv, &g_iv, k);
    for m in &mut r.matches {
        *m = (g_idx[m.0], p_idx[m.1], m.2);
    }
    Ok(r)
}

/// Episode matching at threshold `k`; mean IoU is over true positives.
pub fn episode_match(preds: &[EatingEpisode], gts: &[EatingEpisode], k: f64) -> MatchResult {
    let p: Vec<Interval> = preds.iter().map(EatingEpisode::interval).collect();
    let g: Vec<Interval> = gts.iter().map(EatingEpisode::interval).collect();
    match_intervals(&p, &g, k)
}

/// Mean of `|ŝ - s| / s` over `(ŝ, s)` pairs, as a fraction. `None` for no
/// pairs.
pub fn mape(pairs: &[(f64, f64)]) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for &(pred, truth) in pairs {
        if !(truth > 0.0) {
            return Err(Error::invalid(format!(
                "ground-truth speed must be positive, got {truth}"
            )));
        }
        sum += ((pred - truth) / truth).abs();
    }
    Ok(Some(sum / pairs.len() as f64))
}

/// Pearson correlation of `(ŝ, s)` pairs. `None` with fewer than two pairs
/// or a constant series.
pub fn pcc(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mean_p = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_s = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut var_p, mut var_s) = (0.0, 0.0, 0.0);
    for &(p, s) in pairs {
        let (dp, ds) = (p - mean_p, s - mean_s);
        cov += dp * ds;
        var_p += dp * dp;
        var_s += ds * ds;
    }
    if var_p == 0.0 || var_s == 0.0 {
        return None;
    }
    Some((cov / (var_p * var_s).sqrt()).clamp(-1.0, 1.0))
}

/// Minutes that enter minute-level evaluation: bins overlapping a matched
/// ground-truth episode that contain at least one ground-truth bite.
pub fn minute_domain(gt: &MinuteSpeedTrack, matched_gt_episodes: &[Interval]) -> Vec<bool> {
    gt.counts()
        .iter()
        .enumerate()
        .map(|(m, &c)| {
            let (lo, hi) = (m as f64 * 60.0, (m + 1) as f64 * 60.0);
            c > 0 && matched_gt_episodes.iter().any(|e| e.t_l < hi && e.t_r >= lo)
        })
        .collect()
}

/// Per-minute `(predicted, ground truth)` count pairs within `domain`.
pub fn minute_pairs(pred: &MinuteSpeedTrack, gt: &MinuteSpeedTrack, domain: &[bool]) -> Result<Vec<(f64, f64)>> {
    if pred.len() != gt.len() || domain.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len().max(domain.len()),
        });
    }
    Ok(pred
        .counts()
        .iter()
        .zip(gt.counts())
        .zip(domain)
        .filter(|(_, &d)| d)
        .map(|((&p, &g), _)| (p as f64, g as f64))
        .collect())
}

/// MAPE and PCC over the minutes in `domain`.
pub fn minute_mape_pcc(
    pred: &MinuteSpeedTrack,
    gt: &MinuteSpeedTrack,
    domain: &[bool],
) -> Result<(Option<f64>, Option<f64>)> {
    let pairs = minute_pairs(pred, gt, domain)?;
    Ok((mape(&pairs)?, pcc(&pairs)))
}

pub(crate) fn class_name(c: Class) -> &'static str {
    match c {
        Class::Other => "other",
        Class::Eating => "eating",
        Class::Drinking => "drinking",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bites::BiteSource;
    use crate::datamodel::{BiteHand, BiteInterval};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b)
    }

    fn bites(v: &[(f64, f64, BiteClass)]) -> BiteSet {
        BiteSet::new(
            v.iter()
                .map(|&(a, b, k)| BiteInterval::new(a, b, k, BiteHand::Right).unwrap())
                .collect(),
            BiteSource::Prediction,
        )
    }

    fn labels(v: &[u8]) -> LabelSequence {
        LabelSequence::from_raw(v, 16.0).unwrap()
    }

    #[test]
    fn kappa_examples() {
        let gt = labels(&[0, 1, 1, 2, 0, 0, 1, 2]);
        assert_eq!(cohen_kappa(&gt, &gt).unwrap(), 1.0);
        let c = labels(&[1; 8]);
        assert_eq!(cohen_kappa(&c, &c).unwrap(), 1.0);
        let a = labels(&[0, 1, 0, 1, 0, 1]);
        let b = labels(&[1, 0, 1, 0, 1, 0]);
        assert_eq!(cohen_kappa(&b, &a).unwrap(), -1.0);
        assert!(cohen_kappa(&labels(&[0, 1]), &labels(&[0])).is_err());
    }

    #[test]
    fn kappa_of_independent_uniform_tracks_is_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let k = cohen_kappa(&labels(&a), &labels(&b)).unwrap();
        assert!(k.abs() < 0.05, "kappa {k}");
    }

    #[test]
    fn iou_examples() {
        assert!((interval_iou(iv(10.0, 20.0), iv(15.0, 25.0)) - 5.0 / 15.0).abs() < 1e-15);
        assert_eq!(interval_iou(iv(3.0, 7.0), iv(3.0, 7.0)), 1.0);
        assert_eq!(interval_iou(iv(0.0, 1.0), iv(1.0, 2.0)), 0.0);
        assert_eq!(interval_iou(iv(0.0, 1.0), iv(5.0, 6.0)), 0.0);
    }

    #[test]
    fn segmental_examples() {
        let gt = bites(&[
            (0.0, 2.0, BiteClass::Eating),
            (5.0, 7.0, BiteClass::Eating),
            (9.0, 11.0, BiteClass::Drinking),
        ]);
        let r = segmental_match(&gt, &gt, BiteClass::Eating, 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.f1), (2, 0, 0, 1.0));

        let p = bites(&[(10.0, 20.0, BiteClass::Eating)]);
        let g = bites(&[(15.0, 25.0, BiteClass::Eating)]);
        let lo = segmental_match(&p, &g, BiteClass::Eating, 0.1).unwrap();
        assert_eq!((lo.tp, lo.fp, lo.fn_), (1, 0, 0));
        let hi = segmental_match(&p, &g, BiteClass::Eating, 0.5).unwrap();
        assert_eq!((hi.tp, hi.fp, hi.fn_), (0, 1, 1));
    }

    #[test]
    fn other_class_is_background() {
        // a predicted eating bite over a drinking ground truth counts against
        // each class on its own
        let p = bites(&[(0.0, 2.0, BiteClass::Eating)]);
        let g = bites(&[(0.0, 2.0, BiteClass::Drinking)]);
        let e = segmental_match(&p, &g, BiteClass::Eating, 0.1).unwrap();
        let d = segmental_match(&p, &g, BiteClass::Drinking, 0.1).unwrap();
        assert_eq!((e.tp, e.fp, e.fn_), (0, 1, 0));
        assert_eq!((d.tp, d.fp, d.fn_), (0, 0, 1));
    }

    #[test]
    fn episode_match_examples() {
        let ep = |a, b| EatingEpisode::new(a, b).unwrap();
        let g = vec![ep(0.0, 900.0), ep(2000.0, 2400.0)];
        let r = episode_match(&g, &g, 0.5);
        assert_eq!((r.f1, r.mean_iou()), (1.0, Some(1.0)));

        let r = episode_match(&[ep(0.0, 600.0)], &[ep(0.0, 900.0)], 0.5);
        assert_eq!(r.tp, 1);
        assert!((r.mean_iou().unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let r = episode_match(&[], &[ep(0.0, 900.0), ep(1200.0, 1500.0), ep(2000.0, 2400.0)], 0.5);
        assert_eq!((r.fn_, r.f1), (3, 0.0));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[(3.0, 3.0), (5.5, 5.5)]).unwrap(), Some(0.0));
        assert!((mape(&[(3.3, 3.0)]).unwrap().unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(mape(&[]).unwrap(), None);
        assert!(mape(&[(1.0, 0.0)]).is_err());
        // dyadic factors keep the arithmetic exact
        let s = [1.0, 2.0, 3.0, 4.5, 6.25];
        for e in [0.5, 0.25, 0.125] {
            let pairs: Vec<_> = s.iter().map(|&v| ((1.0 + e) * v, v)).collect();
            assert_eq!(mape(&pairs).unwrap(), Some(e));
        }
    }

    #[test]
    fn pcc_examples() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let same: Vec<_> = s.iter().map(|&v| (v, v)).collect();
        assert_eq!(pcc(&same), Some(1.0));
        let affine: Vec<_> = s.iter().map(|&v| (2.0 * v + 1.0, v)).collect();
        assert_eq!(pcc(&affine), Some(1.0));
        let neg: Vec<_> = s.iter().map(|&v| (8.0 - v, v)).collect();
        assert_eq!(pcc(&neg), Some(-1.0));
        assert_eq!(pcc(&[(1.0, 2.0)]), None);
        assert_eq!(pcc(&[(1.0, 2.0), (1.0, 3.0)]), None);
    }

    #[test]
    fn minute_level_examples() {
        let gt = MinuteSpeedTrack::from_counts(vec![0, 3, 4, 0, 5, 2]);
        let dom = minute_domain(&gt, &[iv(60.0, 299.0)]);
        assert_eq!(dom, vec![false, true, true, false, true, false]);
        assert_eq!(minute_mape_pcc(&gt, &gt, &dom).unwrap(), (Some(0.0), Some(1.0)));
        let zero = MinuteSpeedTrack::from_counts(vec![0; 6]);
        let (m, p) = minute_mape_pcc(&zero, &gt, &dom).unwrap();
        assert_eq!(m, Some(1.0));
        assert_eq!(p, None);
        let none = vec![false; 6];
        assert_eq!(minute_mape_pcc(&gt, &gt, &none).unwrap(), (None, None));
    }

    /// Maximum-cardinality matching over pairs with IoU >= k (augmenting
    /// paths), the best TP count any one-to-one assignment can reach.
    fn max_assignment(preds: &[Interval], gts: &[Interval], k: f64) -> usize {
        fn augment(p: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
            for &g in &adj[p] {
                if seen[g] {
                    continue;
                }
                seen[g] = true;
                if owner[g].map_or(true, |q| augment(q, adj, seen, owner)) {
                    owner[g] = Some(p);
                    return true;
                }
            }
            false
        }
        let adj: Vec<Vec<usize>> = preds
            .iter()
            .map(|p| {
                (0..gts.len())
                    .filter(|&g| {
                        let i = interval_iou(*p, gts[g]);
                        i >= k && i > 0.0
                    })
                    .collect()
            })
            .collect();
        let mut owner = vec![None; gts.len()];
        (0..preds.len())
            .filter(|&p| augment(p, &adj, &mut vec![false; gts.len()], &mut owner))
            .count()
    }

    fn random_segments(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64, BiteClass)> {
        (0..n)
            .map(|_| {
                let a = rng.gen_range(0.0..60.0);
                let klass = if rng.gen_bool(0.8) {
                    BiteClass::Eating
                } else {
                    BiteClass::Drinking
                };
                (a, a + rng.gen_range(0.5..6.0), klass)
            })
            .collect()
    }

    #[test]
    fn greedy_matching_against_exhaustive_assignment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut agree = 0;
        let instances = 200;
        for i in 0..instances {
            let np = rng.gen_range(0..=15);
            let ng = rng.gen_range(0..=15);
            let p = bites(&random_segments(&mut rng, np));
            let g = bites(&random_segments(&mut rng, ng));
            let k = if i % 2 == 0 { 0.1 } else { 0.5 };
            let r = segmental_match(&p, &g, BiteClass::Eating, k).unwrap();
            let pe: Vec<_> = p.of_class(BiteClass::Eating).map(|b| b.interval()).collect();
            let ge: Vec<_> = g.of_class(BiteClass::Eating).map(|b| b.interval()).collect();
            assert_eq!(r.tp + r.fn_, ge.len());
            assert_eq!(r.tp + r.fp, pe.len());
            let best = max_assignment(&pe, &ge, k);
            assert!(r.tp <= best);
            if r.tp == best {
                agree += 1;
            } else {
                eprintln!("instance {i}: greedy tp {} vs optimal {best}", r.tp);
            }
        }
        assert!(agree as f64 >= 0.95 * instances as f64, "agreement {agree}/{instances}");
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in 0.0f64..100.0, la in 0.01f64..50.0, b in 0.0f64..100.0, lb in 0.01f64..50.0) {
            let (x, y) = (iv(a, a + la), iv(b, b + lb));
            let i = interval_iou(x, y);
            prop_assert_eq!(i, interval_iou(y, x));
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert_eq!(interval_iou(x, x), 1.0);
        }

        #[test]
        fn f1_monotone_in_threshold(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let np = rng.gen_range(0..=12);
            let ng = rng.gen_range(0..=12);
            let p = bites(&random_segments(&mut rng, np));
            let g = bites(&random_segments(&mut rng, ng));
            let lo = segmental_match(&p, &g, BiteClass::Eating, 0.1).unwrap();
            let hi = segmental_match(&p, &g, BiteClass::Eating, 0.5).unwrap();
            prop_assert!(hi.f1 <= lo.f1);
            for r in [&lo, &hi] {
                let mut gs: Vec<_> = r.matches.iter().map(|m| m.0).collect();
                let mut ps: Vec<_> = r.matches.iter().map(|m| m.1).collect();
                gs.sort(); gs.dedup(); ps.sort(); ps.dedup();
                prop_assert_eq!(gs.len(), r.matches.len());
                prop_assert_eq!(ps.len(), r.matches.len());
                prop_assert_eq!(r.f1, f1_score(r.tp, r.fp, r.fn_));
            }
        }

        #[test]
        fn mape_scaling_identity(s in prop::collection::vec(0.5f64..10.0, 1..20), e in -0.9f64..2.0) {
            let pairs: Vec<_> = s.iter().map(|&v| ((1.0 + e) * v, v)).collect();
            prop_assert!((mape(&pairs).unwrap().unwrap() - e.abs()).abs() < 1e-12);
        }

        #[test]
        fn pcc_affine_invariance(s in prop::collection::vec(0.5f64..10.0, 2..20), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let spread = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let pairs: Vec<_> = s.iter().map(|&v| (a * v + b, v)).collect();
            prop_assert!((pcc(&pairs).unwrap() - 1.0).abs() < 1e-12);
            let neg: Vec<_> = s.iter().map(|&v| (-a * v + b, v)).collect();
            prop_assert!((pcc(&neg).unwrap() + 1.0).abs() < 1e-12);
        }
    }
}
