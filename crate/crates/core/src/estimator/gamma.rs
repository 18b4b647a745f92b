use serde::{Deserialize, Serialize};

use super::EstimateError;

/// Shape/scale parameterisation of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    /// Seconds.
    pub scale: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Method-of-moments inversion: scale = variance / mean, shape = mean² / variance.
pub fn gamma_from_moments(mean: f64, variance: f64) -> Result<GammaParams, EstimateError> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(EstimateError::InvalidMoments { mean, variance, reason: "mean must be positive" });
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(EstimateError::InvalidMoments { mean, variance, reason: "variance must be positive" });
    }
    Ok(GammaParams { shape: mean * mean / variance, scale: variance / mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn walking_time_with_five_second_variance() {
        let g = gamma_from_moments(60.0, 5.0).unwrap();
        assert!((g.shape - 720.0).abs() < 1e-9);
        assert!((g.scale - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_case() {
        let g = gamma_from_moments(10.0, 100.0).unwrap();
        assert_eq!((g.shape, g.scale), (1.0, 10.0));
    }

    #[test]
    fn degenerate_moments_are_errors() {
        assert!(gamma_from_moments(60.0, 0.0).is_err());
        assert!(gamma_from_moments(0.0, 5.0).is_err());
        assert!(gamma_from_moments(-1.0, 5.0).is_err());
        assert!(gamma_from_moments(f64::NAN, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(mean in 1e-3f64..1e4, variance in 1e-3f64..1e5) {
            let g = gamma_from_moments(mean, variance).unwrap();
            prop_assert!(g.shape > 0.0 && g.scale > 0.0);
            prop_assert!((g.mean() - mean).abs() <= 1e-12 * mean);
            prop_assert!((g.variance() - variance).abs() <= 1e-12 * variance);
        }
    }
}
