//! Exact draws of a unit logit from its full conditional.
//!
//! The conditional density is proportional to
//! `exp(y t - log(1 + e^t)) * N(t; mu, sigma2_e)`. The Bernoulli likelihood
//! factor is at most one, so proposing from the normal prior and accepting with
//! probability `expit(t)^y (1 - expit(t))^(1 - y)` is an exact rejection
//! sampler.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BenchError, Result};

/// Consecutive rejections after which the sampler gives up.
pub const MAX_REJECTIONS: u64 = 1_000_000;

pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Probability of accepting the proposal `t` for response `y`.
pub fn acceptance_probability(y: bool, t: f64) -> f64 {
    if y {
        expit(t)
    } else {
        expit(-t)
    }
}

/// Proposal and acceptance counts accumulated over many draws.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RejectionStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl RejectionStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// One draw of `theta_ij` given `y_ij`, `mu = x_ij^T beta + u_i` and `sigma2_e`.
pub fn sample_theta_rejection<R: Rng + ?Sized>(
    y: bool,
    mu: f64,
    sigma2_e: f64,
    rng: &mut R,
    stats: Option<&mut RejectionStats>,
) -> Result<f64> {
    if !(sigma2_e > 0.0 && sigma2_e.is_finite() && mu.is_finite()) {
        return Err(BenchError::InvalidInput(format!(
            "rejection sampler needs finite mu and positive sigma2_e, got mu = {mu}, sigma2_e = {sigma2_e}"
        )));
    }
    let sd = sigma2_e.sqrt();
    let mut tries = 0u64;
    let out = loop {
        tries += 1;
        let z: f64 = StandardNormal.sample(rng);
        let proposal = mu + sd * z;
        let u: f64 = rng.random();
        if u < acceptance_probability(y, proposal) {
            break Ok(proposal);
        }
        if tries >= MAX_REJECTIONS {
            break Err(BenchError::SamplerDivergence {
                iteration: 0,
                detail: format!(
                    "{MAX_REJECTIONS} consecutive rejections for y = {}, mu = {mu}, sigma2_e = {sigma2_e}",
                    u8::from(y)
                ),
            });
        }
    };
    if let Some(stats) = stats {
        stats.proposals += tries;
        stats.accepted += u64::from(out.is_ok());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn acceptance_at_zero_is_half() {
        assert_eq!(acceptance_probability(true, 0.0), 0.5);
        assert_eq!(acceptance_probability(false, 0.0), 0.5);
    }

    #[test]
    fn acceptance_is_monotone_and_in_unit_interval() {
        let grid: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
        for w in grid.windows(2) {
            let (a, b) = (acceptance_probability(true, w[0]), acceptance_probability(true, w[1]));
            assert!(a < b);
            assert!(a > 0.0 && b < 1.0);
            assert!(acceptance_probability(false, w[0]) > acceptance_probability(false, w[1]));
        }
    }

    #[test]
    fn expit_is_stable_in_the_tails() {
        assert_eq!(expit(-800.0), 0.0);
        assert_eq!(expit(800.0), 1.0);
        assert!((logit(expit(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn acceptance_rate_near_half_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stats = RejectionStats::default();
        let n = 40_000;
        for k in 0..n {
            sample_theta_rejection(k % 2 == 0, 0.0, 1.0, &mut rng, Some(&mut stats)).unwrap();
        }
        let rate = stats.acceptance_rate();
        let se = (0.25 / stats.proposals as f64).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * se, "rate {rate}");
    }

    #[test]
    fn rejects_bad_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_theta_rejection(true, 0.0, 0.0, &mut rng, None).is_err());
    }
}
