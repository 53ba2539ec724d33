//! Inputs shared by the benchmarks.

use bitespeed::preprocess::CombinedSeries;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `seconds` of random normalized 16 Hz data for one hand.
pub fn random_series(seconds: usize, seed: u64) -> CombinedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array2::from_shape_fn((seconds * 16, 6), |_| rng.gen_range(-1.0..1.0));
    let len = data.nrows();
    CombinedSeries::new(data, len, 16.0).expect("valid series")
}

/// Sorted bite onsets: `meals` bursts of `per_meal` bites in a day of
/// background gestures.
pub fn bite_times(meals: usize, per_meal: usize, background: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day = 16.0 * 3600.0;
    let mut t: Vec<f64> = (0..background).map(|_| rng.gen_range(0.0..day)).collect();
    for m in 0..meals {
        let start = day * (m as f64 + 0.5) / meals as f64;
        t.extend((0..per_meal).map(|_| start + rng.gen_range(0.0..1200.0)));
    }
    t.sort_by(f64::total_cmp);
    t
}
