use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand_chacha::ChaCha8Rng;

use super::layers::Linear;
use super::{softmax_row, softmax_rows_in_place, Real};

/// Sinusoidal encoding: `PE[t, 2i] = sin(t / 10000^(2i/d))`,
/// `PE[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn positional_encoding(frames: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((frames, dim), |(t, c)| {
        let i = (c / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Scaled dot-product self-attention over the whole sequence with `heads`
/// heads of `head_dim` each, followed by an output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention<F> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
    pub heads: usize,
    pub head_dim: usize,
}

pub(crate) struct AttentionCache<F> {
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    weights: Vec<Array2<F>>,
    concat: Array2<F>,
}

impl<F: Real> MultiHeadAttention<F> {
    pub fn new(inputs: usize, heads: usize, head_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = heads * head_dim;
        Self {
            wq: Linear::new(inputs, d, rng),
            wk: Linear::new(inputs, d, rng),
            wv: Linear::new(inputs, d, rng),
            wo: Linear::new(d, d, rng),
            heads,
            head_dim,
        }
    }

    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Scores are divided by `sqrt(d_model)`.
    fn scale(&self) -> F {
        F::of(1.0 / (self.d_model() as f64).sqrt())
    }

    pub fn param_names(&self) -> Vec<String> {
        ["q", "k", "v", "out"]
            .iter()
            .flat_map(|p| [format!("attn.{p}.weight"), format!("attn.{p}.bias")])
            .collect()
    }

    pub fn params(&self) -> Vec<&Array2<F>> {
        vec![
            &self.wq.w, &self.wq.b, &self.wk.w, &self.wk.b, &self.wv.w, &self.wv.b, &self.wo.w, &self.wo.b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        vec![
            &mut self.wq.w,
            &mut self.wq.b,
            &mut self.wk.w,
            &mut self.wk.b,
            &mut self.wv.w,
            &mut self.wv.b,
            &mut self.wo.w,
            &mut self.wo.b,
        ]
    }

    pub fn add_positions(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let pe = positional_encoding(x.nrows(), x.ncols());
        let mut out = x.to_owned();
        Zip::from(&mut out).and(&pe).for_each(|o, &p| *o += F::of(p));
        out
    }

    fn head_weights(&self, q: &Array2<F>, k: &Array2<F>, h: usize) -> Array2<F> {
        let cols = s![.., h * self.head_dim..(h + 1) * self.head_dim];
        let t = q.nrows();
        let mut scores = Array2::zeros((t, t));
        general_mat_mul(self.scale(), &q.slice(cols), &k.slice(cols).t(), F::zero(), &mut scores);
        softmax_rows_in_place(&mut scores);
        scores
    }

    /// Per-head `T x T` attention weights for an input that already carries
    /// positional encoding.
    pub fn attention_weights(&self, x: ArrayView2<'_, F>) -> Vec<Array2<F>> {
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        (0..self.heads).map(|h| self.head_weights(&q, &k, h)).collect()
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, AttentionCache<F>) {
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut concat = Array2::zeros((x.nrows(), self.d_model()));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let a = self.head_weights(&q, &k, h);
            let cols = s![.., h * self.head_dim..(h + 1) * self.head_dim];
            general_mat_mul(F::one(), &a, &v.slice(cols), F::zero(), &mut concat.slice_mut(cols));
            weights.push(a);
        }
        let y = self.wo.forward(concat.view());
        (
            y,
            AttentionCache {
                q,
                k,
                v,
                weights,
                concat,
            },
        )
    }

    /// Same result as [`Self::forward`] without keeping attention weights.
    /// Queries are processed in row blocks so each block's scores stay in
    /// cache.
    pub(crate) fn forward_inference(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        const BLOCK: usize = 64;
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let t = x.nrows();
        let mut concat = Array2::zeros((t, self.d_model()));
        let mut scores = Array2::zeros((BLOCK.min(t), t));
        for h in 0..self.heads {
            let cols = s![.., h * self.head_dim..(h + 1) * self.head_dim];
            let kh = k.slice(cols).to_owned();
            let vh = v.slice(cols).to_owned();
            for r0 in (0..t).step_by(BLOCK) {
                let r1 = (r0 + BLOCK).min(t);
                let mut block = scores.slice_mut(s![..r1 - r0, ..]);
                let rows = s![r0..r1, h * self.head_dim..(h + 1) * self.head_dim];
                general_mat_mul(self.scale(), &q.slice(rows), &kh.t(), F::zero(), &mut block);
                for mut row in block.outer_iter_mut() {
                    softmax_row(
                        row.as_slice_mut()
                            .expect("rows of a standard layout array are contiguous"),
                    );
                }
                general_mat_mul(F::one(), &block, &vh, F::zero(), &mut concat.slice_mut(rows));
            }
        }
        self.wo.forward(concat.view())
    }

    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, F>,
        cache: &AttentionCache<F>,
        dy: ArrayView2<'_, F>,
        g: &mut [Array2<F>],
    ) -> Array2<F> {
        let dconcat = self.wo.backward(cache.concat.view(), dy, &mut g[6..8]);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        let scale = self.scale();
        for (h, a) in cache.weights.iter().enumerate() {
            let cols = s![.., h * self.head_dim..(h + 1) * self.head_dim];
            let doh = dconcat.slice(cols);
            general_mat_mul(F::one(), &a.t(), &doh, F::zero(), &mut dv.slice_mut(cols));
            let mut ds = doh.dot(&cache.v.slice(cols).t());
            // softmax backward: dS = A * (dA - rowsum(dA * A))
            let inner = (&ds * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            ds -= &inner;
            ds *= a;
            general_mat_mul(scale, &ds, &cache.k.slice(cols), F::zero(), &mut dq.slice_mut(cols));
            general_mat_mul(scale, &ds.t(), &cache.q.slice(cols), F::zero(), &mut dk.slice_mut(cols));
        }
        let mut dx = self.wq.backward(x, dq.view(), &mut g[0..2]);
        dx += &self.wk.backward(x, dk.view(), &mut g[2..4]);
        dx += &self.wv.backward(x, dv.view(), &mut g[4..6]);
        dx
    }
}
