use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `η^α / (1 + √mse)`; zero for a non-finite MSE.
pub fn reward(mse: f64, complexity: usize, eta: f64) -> f64 {
    if !mse.is_finite() || mse.is_nan() {
        return 0.0;
    }
    eta.powi(complexity as i32) / (1.0 + mse.max(0.0).sqrt())
}

/// Row indices of a seeded uniform subsample without replacement, in
/// ascending order; all rows when `n <= threshold`.
pub fn downsample_rows(n: usize, threshold: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    downsample_rows_with(n, threshold, &mut rng)
}

pub(crate) fn downsample_rows_with(n: usize, threshold: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let threshold = threshold.max(1);
    if n <= threshold {
        return (0..n).collect();
    }
    let mut rows = index::sample(rng, n, threshold).into_vec();
    rows.sort_unstable();
    rows
}

pub fn downsample(data: &crate::data::Dataset, threshold: usize, seed: u64) -> crate::data::Dataset {
    data.select_rows(&downsample_rows(data.n_rows(), threshold, seed))
}
