use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{ProbSequence, Real};
use crate::datamodel::LabelSequence;
use crate::error::{Error, Result};

/// Smoothing and class weighting parameters of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub class_weights: Option<[f64; 3]>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 4.0,
            lambda: 0.15,
            class_weights: None,
        }
    }
}

impl LossConfig {
    fn weight(&self, class: u8) -> f64 {
        self.class_weights.map_or(1.0, |w| w[class as usize])
    }
}

/// Denominators of the two loss terms, pooled over every window in a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossNorm {
    /// Sum of class weights over valid frames.
    pub ce: f64,
    /// Valid adjacent frame pairs times classes.
    pub smooth: f64,
}

impl LossNorm {
    pub fn for_window(target: &[u8], valid: usize, cfg: &LossConfig) -> Self {
        let valid = valid.min(target.len());
        Self {
            ce: target[..valid].iter().map(|&y| cfg.weight(y)).sum(),
            smooth: (valid.saturating_sub(1) * 3) as f64,
        }
    }

    pub fn add(&mut self, other: LossNorm) {
        self.ce += other.ce;
        self.smooth += other.smooth;
    }
}

/// Loss terms after normalization; `total = ce + lambda * smooth`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValue {
    pub ce: f64,
    pub smooth: f64,
    pub total: f64,
}

impl LossValue {
    pub fn add(&mut self, other: LossValue) {
        self.ce += other.ce;
        self.smooth += other.smooth;
        self.total += other.total;
    }
}

fn log_softmax_row(z: &[f64; 3]) -> [f64; 3] {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    [z[0] - lse, z[1] - lse, z[2] - lse]
}

/// Evaluates the loss on log probabilities and returns the gradient with
/// respect to them. Frames at or after `valid` are ignored.
fn terms(
    logp: &[[f64; 3]],
    target: &[u8],
    valid: usize,
    cfg: &LossConfig,
    norm: LossNorm,
) -> (LossValue, Vec<[f64; 3]>) {
    let mut grad = vec![[0.0; 3]; logp.len()];
    let mut ce = 0.0;
    for t in 0..valid {
        let y = target[t] as usize;
        let w = cfg.weight(target[t]);
        ce -= w * logp[t][y];
        grad[t][y] -= w / norm.ce;
    }
    let tau2 = cfg.tau * cfg.tau;
    let mut smooth = 0.0;
    for t in 1..valid {
        for c in 0..3 {
            let d = logp[t][c] - logp[t - 1][c];
            let d2 = d * d;
            if d2 < tau2 {
                smooth += d2;
                let g = 2.0 * d * cfg.lambda / norm.smooth;
                grad[t][c] += g;
                grad[t - 1][c] -= g;
            } else {
                smooth += tau2;
            }
        }
    }
    let ce = ce / norm.ce;
    let smooth = if norm.smooth > 0.0 { smooth / norm.smooth } else { 0.0 };
    let value = LossValue {
        ce,
        smooth,
        total: ce + cfg.lambda * smooth,
    };
    (value, grad)
}

fn check_lengths(frames: usize, target: usize, valid: usize) -> Result<()> {
    if frames != target {
        return Err(Error::LengthMismatch {
            expected: frames,
            actual: target,
        });
    }
    if valid == 0 || frames == 0 {
        return Err(Error::EmptyMask);
    }
    if valid > frames {
        return Err(Error::invalid(format!("valid count {valid} exceeds {frames} frames")));
    }
    Ok(())
}

/// Combined loss on logits with its gradient. `norm` carries the batch-wide
/// denominators so per-window contributions add up to the batch loss.
pub fn loss_and_grad<F: Real>(
    logits: ArrayView2<'_, F>,
    target: &[u8],
    valid: usize,
    cfg: &LossConfig,
    norm: LossNorm,
) -> Result<(LossValue, Array2<F>)> {
    check_lengths(logits.nrows(), target.len(), valid)?;
    if let Some(&y) = target[..valid].iter().find(|&&y| y > 2) {
        return Err(Error::invalid(format!("label {y} out of range")));
    }
    let mut logp = Vec::with_capacity(logits.nrows());
    for row in logits.outer_iter() {
        logp.push(log_softmax_row(&[row[0].to_f64(), row[1].to_f64(), row[2].to_f64()]));
    }
    let (value, glogp) = terms(&logp, target, valid, cfg, norm);
    let mut dz = Array2::zeros(logits.raw_dim());
    for t in 0..valid {
        let s: f64 = glogp[t].iter().sum();
        for j in 0..3 {
            dz[[t, j]] = F::of(glogp[t][j] - logp[t][j].exp() * s);
        }
    }
    Ok((value, dz))
}

/// Combined loss of a probability sequence against frame labels over the
/// first `valid` frames.
pub fn loss(probs: &ProbSequence, target: &LabelSequence, valid: usize, cfg: &LossConfig) -> Result<LossValue> {
    let target = target.as_u8();
    check_lengths(probs.len(), target.len(), valid)?;
    let logp: Vec<[f64; 3]> = probs
        .probs()
        .outer_iter()
        .map(|r| [0, 1, 2].map(|c| r[c].max(f64::MIN_POSITIVE).ln()))
        .collect();
    let norm = LossNorm::for_window(&target, valid, cfg);
    Ok(terms(&logp, &target, valid, cfg, norm).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Class;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[u8]) -> LabelSequence {
        LabelSequence::from_raw(v, 16.0).unwrap()
    }

    #[test]
    fn constant_one_hot_is_zero() {
        let mut p = Array2::zeros((5, 3));
        for t in 0..5 {
            p[[t, 1]] = 1.0;
        }
        let probs = ProbSequence::new(p, 16.0, 0).unwrap();
        let v = loss(&probs, &labels(&[1; 5]), 5, &LossConfig::default()).unwrap();
        assert_eq!(v.ce, 0.0);
        assert_eq!(v.smooth, 0.0);
    }

    #[test]
    fn uniform_is_ln3() {
        let probs = ProbSequence::new(Array2::from_elem((4, 3), 1.0 / 3.0), 16.0, 0).unwrap();
        let v = loss(&probs, &labels(&[0, 1, 2, 1]), 4, &LossConfig::default()).unwrap();
        assert!((v.ce - 3f64.ln()).abs() < 1e-12);
        assert!(v.smooth.abs() < 1e-24);
    }

    #[test]
    fn fully_masked_is_error() {
        let probs = ProbSequence::new(Array2::from_elem((4, 3), 1.0 / 3.0), 16.0, 0).unwrap();
        assert!(matches!(
            loss(&probs, &labels(&[0; 4]), 0, &LossConfig::default()),
            Err(Error::EmptyMask)
        ));
        assert!(loss(&probs, &labels(&[0; 3]), 3, &LossConfig::default()).is_err());
    }

    #[test]
    fn truncation_caps_each_difference() {
        // Adjacent log probability jumps of ~ln(1e-300) exceed tau.
        let mut p = Array2::zeros((2, 3));
        p[[0, 0]] = 1.0;
        p[[1, 2]] = 1.0;
        let probs = ProbSequence::new(p, 16.0, 0).unwrap();
        let cfg = LossConfig::default();
        let v = loss(&probs, &labels(&[0, 2]), 2, &cfg).unwrap();
        assert!((v.smooth - 16.0 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn logits_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = LossConfig {
            class_weights: Some([0.5, 2.0, 3.0]),
            ..LossConfig::default()
        };
        let z = Array2::from_shape_fn((6, 3), |_| rng.gen_range(-2.0..2.0));
        let target = [0u8, 1, 1, 2, 0, 1];
        let valid = 5;
        let norm = LossNorm::for_window(&target, valid, &cfg);
        let (_, g) = loss_and_grad(z.view(), &target, valid, &cfg, norm).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (1, 2), (3, 1), (4, 0), (5, 2)] {
            let mut zp = z.clone();
            zp[idx] += h;
            let mut zm = z.clone();
            zm[idx] -= h;
            let fp = loss_and_grad(zp.view(), &target, valid, &cfg, norm).unwrap().0.total;
            let fm = loss_and_grad(zm.view(), &target, valid, &cfg, norm).unwrap().0.total;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-7, "{idx:?}: {fd} vs {}", g[idx]);
        }
        assert!(g.row(5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_type_round_trip() {
        assert_eq!(labels(&[2]).classes()[0], Class::Drinking);
    }
}
