//! Summary statistics for chain output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise summation; the result does not depend on thread count or chunking.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let sq: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
    pairwise_sum(&sq) / (x.len() as f64 - 1.0)
}

/// Batch length `⌊√N⌋`.
pub fn batch_length(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// Non-overlapping batch means of length `⌊√N⌋`; a trailing partial batch
/// is dropped.
pub fn batch_means(x: &[f64]) -> Vec<f64> {
    let b = batch_length(x.len()).max(1);
    x.chunks_exact(b).map(mean).collect()
}

/// Batch-means Monte Carlo standard error of the sample mean.
pub fn mcse(x: &[f64]) -> f64 {
    let bm = batch_means(x);
    if bm.len() < 2 {
        return f64::NAN;
    }
    (variance(&bm) / bm.len() as f64).sqrt()
}

/// Lag-`k` sample autocorrelation with the usual `1/N` normalization.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return f64::NAN;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let den: Vec<f64> = c.iter().map(|v| v * v).collect();
    let num: Vec<f64> = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).collect();
    let den = pairwise_sum(&den);
    if den == 0.0 {
        return 0.0;
    }
    pairwise_sum(&num) / den
}

/// Mean, SD and their batch-means standard errors for one functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub mean_mcse: f64,
    /// Delta-method MCSE of the SD via the batch means of `(x − x̄)²`.
    pub sd_mcse: f64,
}

impl Summary {
    pub fn of(x: &[f64]) -> Result<Self> {
        if x.len() < 4 {
            return Err(Error::InvalidInput(format!("need at least 4 draws for a summary, got {}", x.len())));
        }
        let m = mean(x);
        let sq: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
        let sd = variance(x).sqrt();
        Ok(Self {
            mean: m,
            sd,
            mean_mcse: mcse(x),
            sd_mcse: mcse(&sq) / (2.0 * sd),
        })
    }
}

/// Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of the KS statistic (Stephens' small-sample correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::RngStream;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let x: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&x), 500500.0);
    }

    #[test]
    fn mcse_of_iid_matches_sd_over_root_n() {
        let mut rng = RngStream::new(3, 0);
        let x: Vec<f64> = (0..250_000).map(|_| rng.random::<f64>()).collect();
        let want = (1.0f64 / 12.0).sqrt() / (x.len() as f64).sqrt();
        assert_relative_eq!(mcse(&x), want, max_relative = 0.15);
    }

    #[test]
    fn ar1_autocorrelation() {
        let mut rng = RngStream::new(5, 0);
        let phi = 0.6;
        let mut x = vec![0.0f64; 100_000];
        for t in 1..x.len() {
            x[t] = phi * x[t - 1] + rng.random::<f64>() - 0.5;
        }
        assert!((autocorrelation(&x, 1) - phi).abs() < 0.02);
        assert!((autocorrelation(&x, 2) - phi * phi).abs() < 0.02);
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov distribution: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert_relative_eq!(ks_p_value(1.3581 / 1e4, 100_000_000), 0.05, max_relative = 1e-3);
        assert_relative_eq!(ks_p_value(1.6276 / 1e4, 100_000_000), 0.01, max_relative = 2e-3);
    }

    #[test]
    fn ks_uniform_sample() {
        let mut rng = RngStream::new(11, 0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic(&x, |v| v.clamp(0.0, 1.0));
        assert!(ks_p_value(d, x.len()) > 1e-3);
        let d = ks_statistic(&x, |v| v.clamp(0.0, 1.0).powf(1.1));
        assert!(ks_p_value(d, x.len()) < 1e-3);
    }
}
