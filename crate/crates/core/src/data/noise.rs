use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Adds Gaussian noise with `σ = level × std(column)` to every column.
pub fn add_noise(columns: &[Vec<f64>], level: f64, seed: u64) -> Vec<Vec<f64>> {
    if level <= 0.0 {
        return columns.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    columns
        .iter()
        .map(|col| {
            let sigma = level * std_dev(col);
            match Normal::new(0.0, sigma) {
                Ok(dist) if sigma > 0.0 => col.iter().map(|v| v + dist.sample(&mut rng)).collect(),
                _ => col.clone(),
            }
        })
        .collect()
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}
