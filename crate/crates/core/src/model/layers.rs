use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rows_sum, Real};

pub(crate) fn uniform<F: Real>(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Array2<F> {
    Array2::from_shape_fn((rows, cols), |_| F::of(rng.gen_range(-bound..bound)))
}

/// Affine map applied to each row: `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `in x out`
    pub w: Array2<F>,
    /// `1 x out`
    pub b: Array2<F>,
}

impl<F: Real> Linear<F> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: uniform(inputs, outputs, bound, rng),
            b: uniform(1, outputs, bound, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut y = Array2::zeros((x.nrows(), self.w.ncols()));
        y += &self.b;
        general_mat_mul(F::one(), &x, &self.w, F::one(), &mut y);
        y
    }

    /// `g[0]`, `g[1]` receive the weight and bias gradients.
    pub(crate) fn backward(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, g: &mut [Array2<F>]) -> Array2<F> {
        general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut g[0]);
        g[1] += &rows_sum(dy);
        dy.dot(&self.w.t())
    }
}

/// Dilated 1D convolution along time with symmetric zero padding, so the
/// output has as many frames as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedConv<F> {
    /// `(kernel * in) x out`; rows `j*in..(j+1)*in` hold tap `j`.
    pub w: Array2<F>,
    pub b: Array2<F>,
    pub kernel: usize,
    pub dilation: usize,
}

impl<F: Real> DilatedConv<F> {
    pub fn new(inputs: usize, outputs: usize, kernel: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / ((inputs * kernel) as f64).sqrt();
        Self {
            w: uniform(inputs * kernel, outputs, bound, rng),
            b: uniform(1, outputs, bound, rng),
            kernel,
            dilation,
        }
    }

    fn inputs(&self) -> usize {
        self.w.nrows() / self.kernel
    }

    /// Output rows `dst` read input rows `src` for tap `j`.
    fn tap_ranges(&self, j: usize, t: usize) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let off = (j as isize - (self.kernel / 2) as isize) * self.dilation as isize;
        let shift = off.unsigned_abs();
        if shift >= t {
            return None;
        }
        Some(if off >= 0 {
            (0..t - shift, shift..t)
        } else {
            (shift..t, 0..t - shift)
        })
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let t = x.nrows();
        let cin = self.inputs();
        let mut y = Array2::zeros((t, self.w.ncols()));
        y += &self.b;
        for j in 0..self.kernel {
            if let Some((dst, src)) = self.tap_ranges(j, t) {
                let wj = self.w.slice(s![j * cin..(j + 1) * cin, ..]);
                let mut out = y.slice_mut(s![dst, ..]);
                general_mat_mul(F::one(), &x.slice(s![src, ..]), &wj, F::one(), &mut out);
            }
        }
        y
    }

    pub(crate) fn backward(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, g: &mut [Array2<F>]) -> Array2<F> {
        let t = x.nrows();
        let cin = self.inputs();
        let mut dx = Array2::zeros(x.raw_dim());
        g[1] += &rows_sum(dy);
        for j in 0..self.kernel {
            if let Some((dst, src)) = self.tap_ranges(j, t) {
                let wj = self.w.slice(s![j * cin..(j + 1) * cin, ..]);
                let dyj = dy.slice(s![dst, ..]);
                let mut gw = g[0].slice_mut(s![j * cin..(j + 1) * cin, ..]);
                general_mat_mul(F::one(), &x.slice(s![src.clone(), ..]).t(), &dyj, F::one(), &mut gw);
                let mut dxs = dx.slice_mut(s![src, ..]);
                general_mat_mul(F::one(), &dyj, &wj.t(), F::one(), &mut dxs);
            }
        }
        dx
    }
}

/// `x + dropout(W_1x1 * relu(conv_dilated(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<F> {
    pub conv: DilatedConv<F>,
    pub proj: Linear<F>,
    pub dropout: f64,
}

pub(crate) struct BlockCache<F> {
    pre: Array2<F>,
    hidden: Array2<F>,
    mask: Option<Array2<F>>,
}

impl<F: Real> ResidualBlock<F> {
    pub(crate) fn forward(&self, x: ArrayView2<'_, F>, rng: Option<&mut ChaCha8Rng>) -> (Array2<F>, BlockCache<F>) {
        let pre = self.conv.forward(x);
        let hidden = pre.mapv(|v| v.max(F::zero()));
        let mut z = self.proj.forward(hidden.view());
        let mask = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let scale = F::of(1.0 / keep);
                let mask =
                    Array2::from_shape_fn(z.raw_dim(), |_| if rng.gen::<f64>() < keep { scale } else { F::zero() });
                z *= &mask;
                Some(mask)
            }
            _ => None,
        };
        z += &x;
        (z, BlockCache { pre, hidden, mask })
    }

    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, F>,
        cache: &BlockCache<F>,
        dout: ArrayView2<'_, F>,
        g: &mut [Array2<F>],
    ) -> Array2<F> {
        let dz = match &cache.mask {
            Some(mask) => &dout * mask,
            None => dout.to_owned(),
        };
        let (g_conv, g_proj) = g.split_at_mut(2);
        let mut dh = self.proj.backward(cache.hidden.view(), dz.view(), g_proj);
        Zip::from(&mut dh).and(&cache.pre).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        let mut dx = self.conv.backward(x, dh.view(), g_conv);
        dx += &dout;
        dx
    }
}

/// Input 1x1 projection followed by residual blocks with dilations
/// `1, 2, 4, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn<F> {
    pub input: Linear<F>,
    pub blocks: Vec<ResidualBlock<F>>,
}

pub(crate) struct TcnCache<F> {
    x: Array2<F>,
    block_inputs: Vec<Array2<F>>,
    blocks: Vec<BlockCache<F>>,
}

impl<F: Real> Tcn<F> {
    pub fn new(
        inputs: usize,
        channels: usize,
        layers: usize,
        kernel: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let input = Linear::new(inputs, channels, rng);
        let blocks = (0..layers)
            .map(|l| ResidualBlock {
                conv: DilatedConv::new(channels, channels, kernel, 1 << l, rng),
                proj: Linear::new(channels, channels, rng),
                dropout,
            })
            .collect();
        Self { input, blocks }
    }

    pub fn tensor_count(&self) -> usize {
        2 + 4 * self.blocks.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["tcn.input.weight".to_owned(), "tcn.input.bias".to_owned()];
        for l in 0..self.blocks.len() {
            for p in ["conv.weight", "conv.bias", "proj.weight", "proj.bias"] {
                names.push(format!("tcn.block{l}.{p}"));
            }
        }
        names
    }

    pub fn params(&self) -> Vec<&Array2<F>> {
        let mut p = vec![&self.input.w, &self.input.b];
        for b in &self.blocks {
            p.extend([&b.conv.w, &b.conv.b, &b.proj.w, &b.proj.b]);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        let mut p = vec![&mut self.input.w, &mut self.input.b];
        for b in &mut self.blocks {
            p.extend([&mut b.conv.w, &mut b.conv.b, &mut b.proj.w, &mut b.proj.b]);
        }
        p
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, F>, mut rng: Option<&mut ChaCha8Rng>) -> (Array2<F>, TcnCache<F>) {
        let mut h = self.input.forward(x);
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(h.view(), rng.as_deref_mut());
            block_inputs.push(std::mem::replace(&mut h, out));
            caches.push(cache);
        }
        let cache = TcnCache {
            x: x.to_owned(),
            block_inputs,
            blocks: caches,
        };
        (h, cache)
    }

    pub(crate) fn backward(&self, cache: &TcnCache<F>, dout: ArrayView2<'_, F>, g: &mut [Array2<F>]) -> Array2<F> {
        let mut d = dout.to_owned();
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let gl = &mut g[2 + 4 * l..6 + 4 * l];
            d = block.backward(cache.block_inputs[l].view(), &cache.blocks[l], d.view(), gl);
        }
        self.input.backward(cache.x.view(), d.view(), &mut g[..2])
    }
}
