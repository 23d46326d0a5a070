//! Gaussian privatization of client rewards.
//!
//! In the private variant every reward a client observes is perturbed with
//! independent `N(0, sigma^2)` noise before the local mean is formed, and the
//! server switches to confidence constants that account for the extra
//! variance.
//!
//! Noise comes from seeded ChaCha20 streams through `rand_distr::Normal`
//! (ziggurat sampling) so simulated runs are reproducible. A deployment that
//! needs an actual privacy guarantee must draw from an unpredictable source.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrivacyError {
    #[error("epsilon must be > 0, got {0}")]
    Epsilon(f64),
    #[error("privacy delta must lie in (0, 1), got {0}")]
    Delta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Per-reward noise variance, `2 ln(1.25 / delta) / epsilon^2`.
    pub variance: f64,
}

impl DpConfig {
    /// `epsilon = +inf` is accepted and yields zero noise.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, PrivacyError> {
        if !(epsilon > 0.0) {
            return Err(PrivacyError::Epsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PrivacyError::Delta(delta));
        }
        Ok(DpConfig {
            epsilon,
            delta,
            variance: dp_sigma(epsilon, delta),
        })
    }
}

/// Gaussian-mechanism variance `2 ln(1.25 / delta) / epsilon^2`.
pub fn dp_sigma(epsilon: f64, delta: f64) -> f64 {
    2.0 * (1.25 / delta).ln() / (epsilon * epsilon)
}

/// Confidence constants `(c, c1) = (sqrt(4 + 16 sigma^2), (2M)^(1/8))`.
pub fn dp_constants(variance: f64, clients: usize) -> (f64, f64) {
    (
        (4.0 + 16.0 * variance).sqrt(),
        (2.0 * clients as f64).powf(0.125),
    )
}

/// Adds independent `N(0, variance)` noise to each reward. No clamping.
pub fn privatize_rewards<R: Rng + ?Sized>(rewards: &[f64], variance: f64, rng: &mut R) -> Vec<f64> {
    if variance == 0.0 {
        return rewards.to_vec();
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance is finite and >= 0");
    rewards.iter().map(|r| r + normal.sample(rng)).collect()
}
