use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Number of bootstrap resamples used for reported error bars.
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    /// Population standard deviation of the resampled means.
    pub std: f64,
    pub samples: Vec<f64>,
}

/// Dirichlet(1, ..., 1) weights from normalized Exp(1) draws.
pub fn dirichlet_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Bayesian bootstrap of the mean of `values`: each resample is a
/// Dirichlet-weighted mean. Returns `None` for an empty input.
pub fn bootstrap_ser<R: Rng + ?Sized>(values: &[f64], n_samples: usize, rng: &mut R) -> Option<BootstrapEstimate> {
    if values.is_empty() || n_samples == 0 {
        return None;
    }
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| dirichlet_weights(values.len(), rng).iter().zip(values).map(|(w, v)| w * v).sum())
        .collect();
    let (mean, std) = mean_std(&samples);
    Some(BootstrapEstimate { mean, std, samples })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn constant_input_has_zero_spread() {
        let mut rng = stream_rng(1, 0);
        let est = bootstrap_ser(&[0.25; 40], 50, &mut rng).unwrap();
        assert!((est.mean - 0.25).abs() < 1e-15);
        assert!(est.std < 1e-15);
        let single = bootstrap_ser(&[0.7], 50, &mut rng).unwrap();
        assert!((single.mean - 0.7).abs() < 1e-15 && single.std < 1e-15);
        assert!(bootstrap_ser(&[], 50, &mut rng).is_none());
    }

    #[test]
    fn two_points_follow_uniform_weight_moments() {
        // With values {0, 1} the weighted mean is the weight on 1, ~ Beta(1, 1).
        let mut rng = stream_rng(2, 0);
        let est = bootstrap_ser(&[0.0, 1.0], 200_000, &mut rng).unwrap();
        assert!((est.mean - 0.5).abs() < 0.005);
        assert!((est.std - (1.0f64 / 12.0).sqrt()).abs() < 0.005);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = stream_rng(3, 0);
        let w = dirichlet_weights(17, &mut rng);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));
    }
}
