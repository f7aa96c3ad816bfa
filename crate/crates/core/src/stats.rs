//! Small estimators shared by the ensemble code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spinchain::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Sample mean with the standard error `s/√n` (unbiased `s`).
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        // Welford
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let std_error = if n > 1 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }
}

pub fn complex_mean(values: &[C64]) -> C64 {
    if values.is_empty() {
        return C64::new(0.0, 0.0);
    }
    values.iter().sum::<C64>() / values.len() as f64
}

/// Nonparametric bootstrap standard deviation of `statistic` over
/// `n_resamples` resamples drawn with replacement. Deterministic in `seed`.
pub fn bootstrap_std<T: Copy>(
    values: &[T],
    n_resamples: usize,
    seed: u64,
    statistic: impl Fn(&[T]) -> f64,
) -> f64 {
    let n = values.len();
    if n < 2 || n_resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Vec::with_capacity(n);
    let stats = (0..n_resamples).map(|_| {
        scratch.clear();
        scratch.extend((0..n).map(|_| values[rng.random_range(0..n)]));
        statistic(&scratch)
    });
    let est = MeanEstimate::from_values(stats.collect::<Vec<_>>());
    // convert standard error of the mean back to the spread of the statistic
    est.std_error * (n_resamples as f64).sqrt()
}
