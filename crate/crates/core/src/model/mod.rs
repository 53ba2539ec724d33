//! The sequence-to-sequence bite detector: a dilated residual TCN, a
//! multi-head self-attention block and a two-layer per-frame classifier,
//! with explicit backward passes, the combined classification + smoothing
//! loss, Adam training and windowed inference.

mod attention;
mod checkpoint;
mod infer;
mod layers;
mod loss;
mod optim;
mod train;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attention::{positional_encoding, MultiHeadAttention};
pub use checkpoint::{Checkpoint, NamedTensor, TrainMeta, FORMAT_MAJOR, FORMAT_MINOR};
pub use infer::{predict, prepare_recording, Predictor};
pub use layers::{DilatedConv, Linear, ResidualBlock, Tcn};
pub use loss::{loss, loss_and_grad, LossConfig, LossNorm, LossValue};
pub use optim::Adam;
pub use train::{train, train_with_observer, validation_f1, EpochStats};

/// Floating point type the network can run in: `f32` for training and
/// inference, `f64` for gradient checking.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `exp` for arguments `<= 0`, as used by softmax.
    #[inline]
    fn exp_nonpositive(self) -> Self {
        self.exp()
    }
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp_nonpositive(self) -> Self {
        exp_f32(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Branch-free single precision `exp` for `x <= 0`, within 2 ulp of the
/// libm result; written so loops over it vectorize.
#[inline(always)]
pub fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    const ROUND: f32 = 12_582_912.0;
    let x = x.max(-87.0).min(0.0);
    let t = x * LOG2E + ROUND;
    let k = t - ROUND;
    let n = t.to_bits().wrapping_sub(ROUND.to_bits());
    let r = x - k * LN2_HI - k * LN2_LO;
    let p = 1.987_569_1e-4f32;
    let p = p * r + 1.398_199_9e-3;
    let p = p * r + 8.333_452e-3;
    let p = p * r + 4.166_579_6e-2;
    let p = p * r + 1.666_666_5e-1;
    let p = p * r + 0.5;
    let p = p * r * r + r + 1.0;
    let scale = f32::from_bits(n.wrapping_add(127) << 23);
    p * scale
}

/// Network and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Dilated layers; layer `l` (1-based) uses dilation `2^(l-1)`.
    pub layers: usize,
    /// Kernels per TCN layer.
    pub channels: usize,
    pub kernel_size: usize,
    pub dropout: f64,
    pub heads: usize,
    pub head_dim: usize,
    pub fcn_hidden: usize,
    pub classes: usize,
    pub lr: f64,
    pub smoothing_tau: f64,
    pub smoothing_lambda: f64,
    pub class_weights: Option<[f64; 3]>,
    pub seed: u64,
    /// Frames per window (60 s at 16 Hz).
    pub window_frames: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// When set, each epoch visits a seeded random subset of this many
    /// training windows.
    pub windows_per_epoch: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 6,
            layers: 9,
            channels: 64,
            kernel_size: 3,
            dropout: 0.3,
            heads: 8,
            head_dim: 16,
            fcn_hidden: 64,
            classes: 3,
            lr: 5e-4,
            smoothing_tau: 4.0,
            smoothing_lambda: 0.15,
            class_weights: None,
            seed: 0,
            window_frames: 960,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            windows_per_epoch: None,
        }
    }
}

impl ModelConfig {
    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }

    /// `1 + (k - 1) * (2^L - 1)` frames.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * ((1usize << self.layers) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.in_channels == 0 || self.channels == 0 || self.fcn_hidden == 0 {
            return bad("layer widths must be positive");
        }
        if self.layers == 0 || self.layers > 20 {
            return bad("layers must be in 1..=20");
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size must be odd");
        }
        if self.heads == 0 || self.head_dim == 0 {
            return bad("heads and head_dim must be positive");
        }
        if self.classes != 3 {
            return bad("the label space has exactly 3 classes");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.lr > 0.0) || !(self.smoothing_tau > 0.0) || self.smoothing_lambda < 0.0 {
            return bad("lr and tau must be positive, lambda nonnegative");
        }
        if self.window_frames == 0 || self.batch_size == 0 {
            return bad("window_frames and batch_size must be positive");
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|&x| !(x > 0.0)) {
                return bad("class weights must be positive");
            }
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.smoothing_tau,
            lambda: self.smoothing_lambda,
            class_weights: self.class_weights,
        }
    }
}

/// Per-frame class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSequence {
    probs: Array2<f64>,
    rate: f64,
    origin: usize,
    start_time_s: f64,
}

impl ProbSequence {
    pub fn new(probs: Array2<f64>, rate: f64, origin: usize) -> Result<Self> {
        if probs.ncols() != 3 {
            return Err(Error::invalid(format!(
                "expected 3 class columns, got {}",
                probs.ncols()
            )));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("rate must be positive"));
        }
        for (t, row) in probs.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-5 || row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::invalid(format!("row {t} is not a probability distribution")));
            }
        }
        Ok(Self {
            probs,
            rate,
            origin,
            start_time_s: 0.0,
        })
    }

    pub fn with_start_time(mut self, start_time_s: f64) -> Self {
        self.start_time_s = start_time_s;
        self
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }
}

/// Row-wise softmax.
pub fn softmax_rows<F: Real>(logits: ArrayView2<'_, F>) -> Array2<F> {
    let mut out = logits.to_owned();
    softmax_rows_in_place(&mut out);
    out
}

pub(crate) fn softmax_rows_in_place<F: Real>(x: &mut Array2<F>) {
    for mut row in x.outer_iter_mut() {
        match row.as_slice_mut() {
            Some(slice) => softmax_row(slice),
            None => {
                let mut tmp = row.to_vec();
                softmax_row(&mut tmp);
                row.assign(&ndarray::ArrayView1::from(&tmp));
            }
        }
    }
}

#[inline]
pub(crate) fn softmax_row<F: Real>(row: &mut [F]) {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    for v in row.iter_mut() {
        *v = (*v - max).exp_nonpositive();
    }
    let sum = row.iter().fold(F::zero(), |a, &v| a + v);
    let inv = F::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<F> {
    tcn: layers::TcnCache<F>,
    attn_in: Array2<F>,
    attn: attention::AttentionCache<F>,
    fc1_in: Array2<F>,
    fc1_pre: Array2<F>,
    fc2_in: Array2<F>,
}

/// Flat gradient storage in [`Model::param_names`] order.
pub type Grads<F> = Vec<Array2<F>>;

/// The full network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    cfg: ModelConfig,
    tcn: Tcn<F>,
    attn: MultiHeadAttention<F>,
    fc1: Linear<F>,
    fc2: Linear<F>,
}

impl<F: Real> Model<F> {
    /// Uniform `±1/sqrt(fan_in)` initialization from `cfg.seed`.
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tcn = Tcn::new(
            cfg.in_channels,
            cfg.channels,
            cfg.layers,
            cfg.kernel_size,
            cfg.dropout,
            &mut rng,
        );
        let attn = MultiHeadAttention::new(cfg.channels, cfg.heads, cfg.head_dim, &mut rng);
        let fc1 = Linear::new(cfg.d_model(), cfg.fcn_hidden, &mut rng);
        let fc2 = Linear::new(cfg.fcn_hidden, cfg.classes, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            tcn,
            attn,
            fc1,
            fc2,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn tcn(&self) -> &Tcn<F> {
        &self.tcn
    }

    pub fn attention(&self) -> &MultiHeadAttention<F> {
        &self.attn
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.tcn.param_names();
        names.extend(self.attn.param_names());
        for (layer, _) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            names.push(format!("{layer}.weight"));
            names.push(format!("{layer}.bias"));
        }
        names
    }

    pub fn params(&self) -> Vec<&Array2<F>> {
        let mut p = self.tcn.params();
        p.extend(self.attn.params());
        p.extend([&self.fc1.w, &self.fc1.b, &self.fc2.w, &self.fc2.b]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        let mut p = self.tcn.params_mut();
        p.extend(self.attn.params_mut());
        p.extend([&mut self.fc1.w, &mut self.fc1.b, &mut self.fc2.w, &mut self.fc2.b]);
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<F> {
        self.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect()
    }

    /// Temporal module: `T x C_in -> T x C_m`. Dropout is applied only when
    /// an RNG is supplied.
    pub fn tcn_forward(&self, x: ArrayView2<'_, F>, dropout: Option<&mut ChaCha8Rng>) -> Array2<F> {
        self.tcn.forward(x, dropout).0
    }

    /// Attention module with positional encoding: `T x C_m -> T x d_model`.
    pub fn mha_forward(&self, x1: ArrayView2<'_, F>) -> Array2<F> {
        let xp = self.attn.add_positions(x1);
        self.attn.forward(xp.view()).0
    }

    /// Classifier: `T x d_model -> T x 3` probabilities.
    pub fn fcn_forward(&self, x2: ArrayView2<'_, F>) -> Array2<F> {
        let mut h = self.fc1.forward(x2);
        h.mapv_inplace(|v| v.max(F::zero()));
        softmax_rows(self.fc2.forward(h.view()).view())
    }

    /// Full forward pass returning logits and the cache for
    /// [`Model::backward`].
    pub fn forward(&self, x: ArrayView2<'_, F>, dropout: Option<&mut ChaCha8Rng>) -> (Array2<F>, ForwardCache<F>) {
        let (x1, tcn) = self.tcn.forward(x, dropout);
        let attn_in = self.attn.add_positions(x1.view());
        let (x2, attn) = self.attn.forward(attn_in.view());
        let fc1_pre = self.fc1.forward(x2.view());
        let fc2_in = fc1_pre.mapv(|v| v.max(F::zero()));
        let logits = self.fc2.forward(fc2_in.view());
        let cache = ForwardCache {
            tcn,
            attn_in,
            attn,
            fc1_in: x2,
            fc1_pre,
            fc2_in,
        };
        (logits, cache)
    }

    /// Accumulates parameter gradients of the loss given `dlogits` into
    /// `grads` and returns the input gradient.
    pub fn backward(&self, cache: &ForwardCache<F>, dlogits: ArrayView2<'_, F>, grads: &mut Grads<F>) -> Array2<F> {
        let n_tcn = self.tcn.tensor_count();
        let n_attn = 8;
        let (g_tcn, rest) = grads.split_at_mut(n_tcn);
        let (g_attn, g_fc) = rest.split_at_mut(n_attn);
        let (g_fc1, g_fc2) = g_fc.split_at_mut(2);

        let mut dh = self.fc2.backward(cache.fc2_in.view(), dlogits, g_fc2);
        ndarray::Zip::from(&mut dh).and(&cache.fc1_pre).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        let dx2 = self.fc1.backward(cache.fc1_in.view(), dh.view(), g_fc1);
        let dx1 = self
            .attn
            .backward(cache.attn_in.view(), &cache.attn, dx2.view(), g_attn);
        self.tcn.backward(&cache.tcn, dx1.view(), g_tcn)
    }

    /// Per-frame class probabilities with dropout disabled.
    pub fn infer(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let (x1, _) = self.tcn.forward(x, None);
        let attn_in = self.attn.add_positions(x1.view());
        let x2 = self.attn.forward_inference(attn_in.view());
        let mut h = self.fc1.forward(x2.view());
        h.mapv_inplace(|v| v.max(F::zero()));
        softmax_rows(self.fc2.forward(h.view()).view())
    }

    /// Converts to another precision.
    pub fn cast<G: Real>(&self) -> Model<G> {
        let mut out = Model::<G>::new(&self.cfg).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.mapv(|v| G::of(v.to_f64()));
        }
        out
    }
}

pub(crate) fn rows_sum<F: Real>(a: ArrayView2<'_, F>) -> Array2<F> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(t: usize, c: usize, seed: u64, scale: f64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, c), |_| rng.gen_range(-scale..scale))
    }

    #[test]
    fn fast_exp_close_to_libm() {
        let mut worst = 0.0f64;
        for i in 0..=870_000 {
            let x = -(i as f32) * 1e-4;
            let want = (x as f64).exp();
            let got = exp_f32(x) as f64;
            worst = worst.max((got - want).abs() / want);
        }
        assert!(worst < 3e-7, "{worst}");
        assert_eq!(exp_f32(0.0), 1.0);
        assert_eq!(exp_f32(f32::NEG_INFINITY), exp_f32(-87.0));
    }

    #[test]
    fn default_shapes() {
        let m = Model::<f32>::new(&ModelConfig::default()).unwrap();
        let x = random_input(960, 6, 1, 1.0).mapv(|v| v as f32);
        let x1 = m.tcn_forward(x.view(), None);
        assert_eq!(x1.dim(), (960, 64));
        let x2 = m.mha_forward(x1.view());
        assert_eq!(x2.dim(), (960, 128));
        let p = m.fcn_forward(x2.view());
        assert_eq!(p.dim(), (960, 3));
        for row in p.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn default_receptive_field_is_1023() {
        assert_eq!(ModelConfig::default().receptive_field(), 1023);
        assert_eq!(ModelConfig::default().d_model(), 128);
    }

    #[test]
    fn parameter_count_near_budget() {
        let m = Model::<f32>::new(&ModelConfig::default()).unwrap();
        let n = m.param_count() as f64;
        assert!((n / 203_000.0 - 1.0).abs() <= 0.2, "{n} parameters");
    }

    #[test]
    fn zero_classifier_gives_uniform_rows() {
        let mut m = Model::<f64>::new(&ModelConfig::default()).unwrap();
        m.fc1.w.fill(0.0);
        m.fc1.b.fill(0.0);
        m.fc2.w.fill(0.0);
        m.fc2.b.fill(0.0);
        let p = m.fcn_forward(random_input(10, 128, 2, 1.0).view());
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn outputs_are_distributions_for_large_inputs() {
        let cfg = ModelConfig {
            layers: 4,
            ..ModelConfig::default()
        };
        let m = Model::<f32>::new(&cfg).unwrap();
        for seed in 0..3 {
            let x = random_input(200, 6, seed, 10.0).mapv(|v| v as f32);
            let p = m.infer(x.view());
            for row in p.outer_iter() {
                assert!(row.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
                assert!((row.sum() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn infer_matches_training_forward_without_dropout() {
        let cfg = ModelConfig {
            layers: 3,
            channels: 8,
            heads: 2,
            head_dim: 4,
            fcn_hidden: 8,
            ..ModelConfig::default()
        };
        let m = Model::<f64>::new(&cfg).unwrap();
        let x = random_input(40, 6, 3, 1.0);
        let (logits, _) = m.forward(x.view(), None);
        let a = softmax_rows(logits.view());
        let b = m.infer(x.view());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn config_validation() {
        let even = ModelConfig {
            kernel_size: 4,
            ..ModelConfig::default()
        };
        assert!(even.validate().is_err());
        assert!(ProbSequence::new(Array2::from_elem((2, 3), 0.5), 16.0, 0).is_err());
    }
}
