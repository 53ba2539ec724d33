//! Signal conditioning ahead of the network: hand mirroring, anti-aliased
//! decimation, two-hand concatenation, z-scoring and windowing.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Class, FrameSeries, Hand, LabelSequence, N_CHANNELS};
use crate::error::{Error, Result};

/// Channels negated by hand mirroring: ax, gy, gz.
pub const MIRRORED_CHANNELS: [usize; 3] = [0, 4, 5];

/// Anti-alias cutoff as a fraction of the target Nyquist frequency.
pub const CUTOFF_FRACTION: f64 = 0.8;

/// Filter half-length in units of the decimation factor.
const TAPS_PER_FACTOR: usize = 16;

/// Negates ax, gy and gz so left-wrist motion resembles right-wrist motion.
pub fn mirror_hand(series: &FrameSeries) -> FrameSeries {
    let mut data = series.data().to_owned();
    mirror_in_place(&mut data);
    series
        .with_data(series.sample_rate_hz(), data)
        .expect("mirroring preserves every invariant")
}

pub(crate) fn mirror_in_place(data: &mut Array2<f64>) {
    for &c in &MIRRORED_CHANNELS {
        data.column_mut(c).mapv_inplace(|v| -v);
    }
}

/// Integer decimation factor from `from_hz` to `to_hz`.
pub fn decimation_factor(from_hz: f64, to_hz: f64) -> Result<usize> {
    if !(to_hz > 0.0 && to_hz.is_finite()) || to_hz > from_hz {
        return Err(Error::NonIntegerRatio {
            from: from_hz,
            to: to_hz,
        });
    }
    let ratio = from_hz / to_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 * ratio || factor < 1.0 {
        return Err(Error::NonIntegerRatio {
            from: from_hz,
            to: to_hz,
        });
    }
    Ok(factor as usize)
}

/// Linear-phase windowed-sinc low-pass (Hamming window) with unit DC gain.
///
/// `cutoff` is in cycles per input sample.
pub fn lowpass_taps(cutoff: f64, half_len: usize) -> Vec<f64> {
    let n = 2 * half_len + 1;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let m = i as f64 - half_len as f64;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * m).sin() / (std::f64::consts::PI * m)
            };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Zero-phase FIR filtering evaluated only at every `step`-th sample.
///
/// Edges are extended by odd reflection (`2 x[0] - x[k]`), which reproduces
/// constants and linear trends exactly.
fn filter_decimate(x: &[f64], taps: &[f64], step: usize) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let n = x.len() as isize;
    let at = |i: isize| -> f64 {
        if n == 1 {
            return x[0];
        }
        if i < 0 {
            let k = (-i).min(n - 1);
            2.0 * x[0] - x[k as usize]
        } else if i >= n {
            let k = (2 * (n - 1) - i).max(0);
            2.0 * x[(n - 1) as usize] - x[k as usize]
        } else {
            x[i as usize]
        }
    };
    let out_len = x.len() / step;
    (0..out_len)
        .map(|j| {
            let c = (j * step) as isize;
            taps.iter()
                .enumerate()
                .map(|(k, &w)| w * at(c + k as isize - half))
                .sum()
        })
        .collect()
}

/// Low-pass filters and decimates to `target_hz`.
///
/// Output length is `floor(T * target / rate)`; output frame `j` is aligned
/// with input frame `j * factor`.
pub fn downsample(series: &FrameSeries, target_hz: f64) -> Result<FrameSeries> {
    let factor = decimation_factor(series.sample_rate_hz(), target_hz)?;
    if factor == 1 {
        return Ok(series.clone());
    }
    let out_len = series.len() / factor;
    if out_len == 0 {
        return Err(Error::invalid(format!(
            "series of {} frames is too short to decimate by {factor}",
            series.len()
        )));
    }
    let cutoff = CUTOFF_FRACTION * 0.5 / factor as f64;
    let taps = lowpass_taps(cutoff, TAPS_PER_FACTOR * factor / 2);
    let mut out = Array2::zeros((out_len, N_CHANNELS));
    for c in 0..N_CHANNELS {
        let ch: Vec<f64> = series.channel(c).to_vec();
        for (j, v) in filter_decimate(&ch, &taps, factor).into_iter().enumerate() {
            out[[j, c]] = v;
        }
    }
    series.with_data(target_hz, out)
}

/// Decimates a label track by frame picking; frame `j` keeps the class of
/// input frame `j * factor`.
pub fn downsample_labels(labels: &LabelSequence, target_hz: f64) -> Result<LabelSequence> {
    let factor = decimation_factor(labels.sample_rate_hz(), target_hz)?;
    let out_len = labels.len() / factor;
    let classes = (0..out_len).map(|j| labels.classes()[j * factor]).collect();
    LabelSequence::new(classes, target_hz)
}

/// Right-hand frames followed by mirrored left-hand frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSeries {
    data: Array2<f64>,
    labels: Option<Vec<Class>>,
    split_index: usize,
    rate: f64,
}

impl CombinedSeries {
    pub fn new(data: Array2<f64>, split_index: usize, rate: f64) -> Result<Self> {
        if data.ncols() != N_CHANNELS {
            return Err(Error::invalid(format!("expected {N_CHANNELS} channels")));
        }
        if split_index > data.nrows() {
            return Err(Error::invalid(format!(
                "split index {split_index} beyond {} frames",
                data.nrows()
            )));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("rate must be positive"));
        }
        Ok(Self {
            data,
            labels: None,
            split_index,
            rate,
        })
    }

    /// Wraps a single hand. A left-hand series is mirrored and placed after
    /// an empty right block.
    pub fn single(series: &FrameSeries) -> Self {
        match series.hand() {
            Hand::Right => Self::new(series.data().to_owned(), series.len(), series.sample_rate_hz()),
            Hand::Left => Self::new(mirror_hand(series).into_data(), 0, series.sample_rate_hz()),
        }
        .expect("frame series satisfies the combined invariants")
    }

    pub fn with_labels(mut self, labels: Vec<Class>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn labels(&self) -> Option<&[Class]> {
        self.labels.as_deref()
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Contiguous frame ranges that never cross the concatenation seam.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        [0..self.split_index, self.split_index..self.len()]
            .into_iter()
            .filter(|r| !r.is_empty())
            .collect()
    }

    /// Splits into the right block and the (still mirrored) left block.
    pub fn split(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        (
            self.data.slice(s![..self.split_index, ..]),
            self.data.slice(s![self.split_index.., ..]),
        )
    }
}

/// Concatenates `right` and mirrored `left` along time.
pub fn combine_hands(right: &FrameSeries, left: &FrameSeries) -> Result<CombinedSeries> {
    if right.sample_rate_hz() != left.sample_rate_hz() {
        return Err(Error::RateMismatch(right.sample_rate_hz(), left.sample_rate_hz()));
    }
    let mirrored = mirror_hand(left);
    let data = ndarray::concatenate(Axis(0), &[right.data(), mirrored.data()]).expect("both blocks have 6 columns");
    CombinedSeries::new(data, right.len(), right.sample_rate_hz())
}

/// Concatenates label tracks in the same order as [`combine_hands`].
pub fn combine_labels(right: &LabelSequence, left: &LabelSequence) -> Vec<Class> {
    right.classes().iter().chain(left.classes()).copied().collect()
}

/// Per-channel z-score statistics, persisted with model checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_CHANNELS],
    pub std: [f64; N_CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_CHANNELS],
            std: [1.0; N_CHANNELS],
        }
    }

    /// Population mean/std over all frames of all blocks.
    pub fn fit<'a>(blocks: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0f64; N_CHANNELS];
        let mut blocks_vec = Vec::new();
        for b in blocks {
            for row in b.outer_iter() {
                for c in 0..N_CHANNELS {
                    sum[c] += row[c];
                }
            }
            n += b.nrows();
            blocks_vec.push(b);
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit normalization on zero frames"));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut ss = [0.0f64; N_CHANNELS];
        for b in &blocks_vec {
            for row in b.outer_iter() {
                for c in 0..N_CHANNELS {
                    let d = row[c] - mean[c];
                    ss[c] += d * d;
                }
            }
        }
        let std = ss.map(|v| (v / n as f64).sqrt());
        let stats = Self { mean, std };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, &s) in self.std.iter().enumerate() {
            if !(s.is_finite() && s > 1e-12 * (1.0 + self.mean[c].abs())) {
                return Err(Error::ZeroVariance(c));
            }
        }
        Ok(())
    }

    pub fn apply(&self, data: &mut Array2<f64>) {
        for c in 0..N_CHANNELS {
            let (m, s) = (self.mean[c], self.std[c]);
            data.column_mut(c).mapv_inplace(|v| (v - m) / s);
        }
    }
}

/// Z-scores every channel with the supplied training statistics.
pub fn normalize(series: &CombinedSeries, stats: &NormStats) -> Result<CombinedSeries> {
    stats.validate()?;
    let mut out = series.clone();
    stats.apply(&mut out.data);
    Ok(out)
}

/// One fixed-length network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `T_w x 6`, zero-padded past `valid`.
    pub x: Array2<f64>,
    /// Per-frame targets when the source carried labels.
    pub y: Option<Vec<u8>>,
    /// Offset of frame 0 in the source timeline.
    pub origin: usize,
    /// Number of real (unpadded) frames.
    pub valid: usize,
}

impl Window {
    pub fn has_positive(&self) -> bool {
        self.y
            .as_ref()
            .map(|y| y[..self.valid].iter().any(|&c| c != 0))
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowBatch {
    pub windows: Vec<Window>,
    pub frames: usize,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn extend(&mut self, other: WindowBatch) {
        debug_assert!(self.windows.is_empty() || self.frames == other.frames);
        self.frames = other.frames;
        self.windows.extend(other.windows);
    }
}

/// Window start offsets for a segment of `len` frames: `0, stride, ...`,
/// stopping at the first window that reaches the end.
pub fn window_offsets(len: usize, frames: usize, stride: usize) -> Vec<usize> {
    assert!(frames > 0 && stride > 0, "window and stride must be positive");
    let mut out = Vec::new();
    let mut o = 0;
    while o < len {
        out.push(o);
        if o + frames >= len {
            break;
        }
        o += stride;
    }
    out
}

/// Cuts the series into `frames`-long windows, never across the seam. The
/// last window of each segment is zero-padded on the right.
pub fn window(series: &CombinedSeries, frames: usize, stride: usize) -> WindowBatch {
    let mut windows = Vec::new();
    for seg in series.segments() {
        for off in window_offsets(seg.len(), frames, stride) {
            let start = seg.start + off;
            let end = (start + frames).min(seg.end);
            let valid = end - start;
            let mut x = Array2::zeros((frames, N_CHANNELS));
            x.slice_mut(s![..valid, ..])
                .assign(&series.data.slice(s![start..end, ..]));
            let y = series.labels.as_ref().map(|l| {
                let mut y = vec![0u8; frames];
                for (d, &c) in y.iter_mut().zip(&l[start..end]) {
                    *d = c as u8;
                }
                y
            });
            windows.push(Window {
                x,
                y,
                origin: start,
                valid,
            });
        }
    }
    WindowBatch { windows, frames }
}

/// Averages per-window rows back onto a `len`-frame timeline, ignoring
/// padded frames. Frames no window covers stay zero.
pub fn overlap_average(len: usize, cols: usize, parts: &[(usize, usize, ArrayView2<'_, f64>)]) -> Array2<f64> {
    let mut acc = Array2::<f64>::zeros((len, cols));
    let mut hits = vec![0u32; len];
    for (origin, valid, rows) in parts {
        for i in 0..*valid {
            let t = origin + i;
            if t >= len {
                break;
            }
            let mut dst = acc.row_mut(t);
            dst += &rows.row(i);
            hits[t] += 1;
        }
    }
    for (mut row, &h) in acc.outer_iter_mut().zip(&hits) {
        if h > 1 {
            row.mapv_inplace(|v| v / h as f64);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Hand;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn series(hand: Hand, rate: f64, data: Array2<f64>) -> FrameSeries {
        FrameSeries::new(hand, rate, 0.0, data).unwrap()
    }

    fn random_series(hand: Hand, len: usize, seed: u64) -> FrameSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((len, 6), |_| rng.gen_range(-5.0..5.0));
        series(hand, 64.0, data)
    }

    #[test]
    fn mirror_negates_ax_gy_gz() {
        let s = series(
            Hand::Left,
            64.0,
            Array2::from_shape_vec((1, 6), vec![1., 2., 3., 4., 5., 6.]).unwrap(),
        );
        let m = mirror_hand(&s);
        assert_eq!(m.data().row(0).to_vec(), vec![-1., 2., 3., 4., -5., -6.]);
        assert_eq!(m.hand(), Hand::Left);
        let z = series(Hand::Left, 64.0, Array2::zeros((3, 6)));
        assert_eq!(mirror_hand(&z), z);
    }

    #[test]
    fn downsample_64_to_16_length() {
        let s = random_series(Hand::Right, 640, 1);
        let d = downsample(&s, 16.0).unwrap();
        assert_eq!(d.len(), 160);
        assert_eq!(d.sample_rate_hz(), 16.0);
    }

    #[test]
    fn downsample_rejects_non_integer_ratio() {
        let s = random_series(Hand::Right, 640, 1);
        assert!(matches!(downsample(&s, 20.0), Err(Error::NonIntegerRatio { .. })));
        assert!(matches!(downsample(&s, 128.0), Err(Error::NonIntegerRatio { .. })));
    }

    #[test]
    fn downsample_preserves_dc() {
        let s = series(Hand::Right, 64.0, Array2::from_elem((333, 6), 0.731));
        let d = downsample(&s, 16.0).unwrap();
        for v in d.data() {
            assert!((v - 0.731).abs() < 1e-9);
        }
    }

    #[test]
    fn downsampled_sine_matches_analytic_samples() {
        let f = 0.5;
        let n = 64 * 40;
        let data = Array2::from_shape_fn((n, 6), |(i, _)| (2.0 * PI * f * i as f64 / 64.0).sin());
        let d = downsample(&series(Hand::Right, 64.0, data), 16.0).unwrap();
        let max_err = d
            .channel(0)
            .iter()
            .enumerate()
            .map(|(j, v)| (v - (2.0 * PI * f * j as f64 / 16.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.02, "max error {max_err}");
    }

    #[test]
    fn downsample_attenuates_above_target_nyquist() {
        // 12 Hz aliases to 4 Hz at 16 Hz if left unfiltered.
        let n = 64 * 20;
        let data = Array2::from_shape_fn((n, 6), |(i, _)| (2.0 * PI * 12.0 * i as f64 / 64.0).sin());
        let d = downsample(&series(Hand::Right, 64.0, data), 16.0).unwrap();
        let interior = d.channel(0).slice(s![40..d.len() - 40]).to_vec();
        let peak = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 0.05, "alias peak {peak}");
    }

    #[test]
    fn combine_lengths_and_indexing() {
        let r = random_series(Hand::Right, 100, 2);
        let l = random_series(Hand::Left, 100, 3);
        let c = combine_hands(&r, &l).unwrap();
        assert_eq!(c.len(), 200);
        assert_eq!(c.split_index(), 100);
        assert_eq!(c.data().row(150), mirror_hand(&l).data().row(50));
    }

    #[test]
    fn combine_rejects_rate_mismatch() {
        let r = random_series(Hand::Right, 100, 2);
        let l = FrameSeries::new(Hand::Left, 16.0, 0.0, Array2::zeros((25, 6))).unwrap();
        assert!(matches!(combine_hands(&r, &l), Err(Error::RateMismatch(..))));
    }

    #[test]
    fn split_and_unmirror_recovers_left() {
        let r = random_series(Hand::Right, 77, 4);
        let l = random_series(Hand::Left, 77, 5);
        let c = combine_hands(&r, &l).unwrap();
        let (right, left_m) = c.split();
        assert_eq!(right, r.data());
        let mut back = left_m.to_owned();
        mirror_in_place(&mut back);
        assert_eq!(back, l.data());
    }

    #[test]
    fn identity_stats_are_identity() {
        let r = random_series(Hand::Right, 50, 6);
        let c = CombinedSeries::single(&r);
        assert_eq!(normalize(&c, &NormStats::identity()).unwrap(), c);
    }

    #[test]
    fn self_normalization_has_unit_moments() {
        let r = random_series(Hand::Right, 500, 7);
        let l = random_series(Hand::Left, 500, 8);
        let c = combine_hands(&r, &l).unwrap();
        let stats = NormStats::fit([c.data()]).unwrap();
        let n = normalize(&c, &stats).unwrap();
        for ch in 0..6 {
            let col = n.data().column(ch).to_vec();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_is_zero_variance() {
        let mut d = Array2::from_shape_fn((40, 6), |(i, c)| (i * (c + 1)) as f64);
        d.column_mut(2).fill(1.0);
        let err = NormStats::fit([d.view()]).unwrap_err();
        assert!(err.to_string().contains("zero variance channel"));
        let mut bad = NormStats::identity();
        bad.std[3] = 0.0;
        let c = CombinedSeries::new(d, 40, 16.0).unwrap();
        assert!(matches!(normalize(&c, &bad), Err(Error::ZeroVariance(3))));
    }

    #[test]
    fn window_counts_and_padding() {
        let c = CombinedSeries::new(Array2::ones((1920, 6)), 1920, 16.0).unwrap();
        assert_eq!(window(&c, 960, 960).len(), 2);

        let c = CombinedSeries::new(Array2::ones((1000, 6)), 1000, 16.0).unwrap();
        let w = window(&c, 960, 960);
        assert_eq!(w.len(), 2);
        assert_eq!(w.windows[1].origin, 960);
        assert_eq!(w.windows[1].valid, 40);
        assert_eq!(960 - w.windows[1].valid, 920);
        assert!(w.windows[1].x.slice(s![40.., ..]).iter().all(|&v| v == 0.0));
        assert!(w.windows.iter().all(|w| w.x.dim() == (960, 6)));
    }

    #[test]
    fn windows_never_cross_the_seam() {
        let r = random_series(Hand::Right, 1000, 9);
        let l = random_series(Hand::Left, 1000, 10);
        let c = combine_hands(&r, &l).unwrap();
        let w = window(&c, 960, 480);
        for win in &w.windows {
            let end = win.origin + win.valid;
            assert!(end <= c.split_index() || win.origin >= c.split_index());
        }
        let origins: Vec<_> = w.windows.iter().map(|w| w.origin).collect();
        assert!(origins.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn overlap_average_of_constant_field() {
        let c = CombinedSeries::new(Array2::ones((2500, 6)), 1300, 16.0).unwrap();
        let w = window(&c, 960, 480);
        let field = Array2::from_elem((960, 3), 0.25);
        let parts: Vec<_> = w.windows.iter().map(|w| (w.origin, w.valid, field.view())).collect();
        let avg = overlap_average(c.len(), 3, &parts);
        assert!(avg.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn label_downsampling_picks_aligned_frames() {
        let l = LabelSequence::from_raw(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 0], 64.0).unwrap();
        let d = downsample_labels(&l, 16.0).unwrap();
        assert_eq!(d.as_u8(), vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn mirror_is_involution(seed in 0u64..1000, len in 1usize..200) {
            let s = random_series(Hand::Left, len, seed);
            prop_assert_eq!(mirror_hand(&mirror_hand(&s)), s);
        }

        #[test]
        fn mirror_commutes_with_downsampling(seed in 0u64..1000, len in 4usize..400) {
            let s = random_series(Hand::Left, len, seed);
            let a = downsample(&mirror_hand(&s), 16.0).unwrap();
            let b = mirror_hand(&downsample(&s, 16.0).unwrap());
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn windowing_covers_every_frame(len in 1usize..3000, split in 0usize..3000, tw in 1usize..400, div in 1usize..5) {
            let split = split.min(len);
            let stride = (tw / div).max(1);
            let c = CombinedSeries::new(Array2::zeros((len, 6)), split, 16.0).unwrap();
            let w = window(&c, tw, stride);
            let mut cover = vec![0usize; len];
            for win in &w.windows {
                prop_assert_eq!(win.x.nrows(), tw);
                for t in win.origin..win.origin + win.valid {
                    cover[t] += 1;
                }
            }
            prop_assert!(cover.iter().all(|&c| c >= 1));
            if tw % stride == 0 {
                for seg in c.segments() {
                    if seg.len() >= 2 * tw {
                        for t in seg.start + tw..seg.end - tw {
                            prop_assert!(cover[t] >= tw / stride);
                        }
                    }
                }
            }
        }
    }
}
