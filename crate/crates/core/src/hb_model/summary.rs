use nalgebra::DMatrix;

use super::rejection::expit;
use super::GibbsState;
use crate::error::{BenchError, Result};
use crate::posterior::PosteriorSummary;
use crate::types::ConstraintWeights;

/// Scale on which unit parameters are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummaryScale {
    /// Response probabilities `expit(theta_ij)`.
    #[default]
    Probability,
    /// Raw logits `theta_ij`.
    Logit,
}

/// Posterior means and within-area covariances from retained draws.
///
/// Covariances use the population (divide by `R`) convention, which equals
/// the mean of products minus the product of means.
pub fn summarize_posterior(
    draws: &[GibbsState],
    constraint: &ConstraintWeights,
    scale: SummaryScale,
) -> Result<PosteriorSummary> {
    if draws.len() < 2 {
        return Err(BenchError::InsufficientSample {
            needed: 2,
            got: draws.len(),
        });
    }
    let sizes: Vec<usize> = constraint.unit_weights.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    if let Some(bad) = draws.iter().find(|d| d.theta.len() != n) {
        return Err(BenchError::InvalidInput(format!(
            "draw has {} unit parameters, constraint weights cover {n} units",
            bad.theta.len()
        )));
    }
    let r = draws.len() as f64;
    let transform = |t: f64| match scale {
        SummaryScale::Probability => expit(t),
        SummaryScale::Logit => t,
    };

    let mut mean_theta = Vec::with_capacity(sizes.len());
    let mut covs = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &ni in &sizes {
        let values = DMatrix::from_fn(draws.len(), ni, |k, j| transform(draws[k].theta[offset + j]));
        let mean: Vec<f64> = (0..ni).map(|j| values.column(j).sum() / r).collect();
        let mut centered = values;
        for j in 0..ni {
            centered.column_mut(j).add_scalar_mut(-mean[j]);
        }
        let cov = centered.transpose() * &centered / r;
        mean_theta.push(mean);
        covs.push(cov);
        offset += ni;
    }
    Ok(PosteriorSummary::from_moments(
        mean_theta,
        covs,
        &constraint.unit_weights,
        draws.len(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn state(theta: &[f64]) -> GibbsState {
        GibbsState {
            beta: DVector::zeros(1),
            u: DVector::zeros(2),
            theta: DVector::from_column_slice(theta),
            sigma2_e: 1.0,
            sigma2_u: 1.0,
        }
    }

    fn constraint() -> ConstraintWeights {
        ConstraintWeights {
            unit_weights: vec![vec![0.25, 0.75], vec![1.0]],
            area_weights: vec![0.5, 0.5],
            target: 0.3,
        }
    }

    #[test]
    fn two_draw_moments_on_logit_scale() {
        let draws = [state(&[0.0, 1.0, 2.0]), state(&[2.0, 3.0, 2.0])];
        let s = summarize_posterior(&draws, &constraint(), SummaryScale::Logit).unwrap();
        assert_eq!(s.mean_theta, vec![vec![1.0, 2.0], vec![2.0]]);
        assert_eq!(s.var_theta, vec![vec![1.0, 1.0], vec![0.0]]);
        assert_eq!(s.within_area_cov[0][(0, 1)], 1.0);
        assert!((s.mean_area[0] - 1.75).abs() < 1e-15);
        assert!((s.var_area[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.retained_draws, 2);
    }

    #[test]
    fn probability_scale_transforms_before_averaging() {
        let draws = [state(&[0.0, -50.0, 50.0]), state(&[0.0, 50.0, 50.0])];
        let s = summarize_posterior(&draws, &constraint(), SummaryScale::Probability).unwrap();
        assert_eq!(s.mean_theta[0][0], 0.5);
        assert!((s.mean_theta[0][1] - 0.5).abs() < 1e-15);
        assert!((s.var_theta[0][1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn needs_two_draws() {
        let draws = [state(&[0.0, 0.0, 0.0])];
        assert_eq!(
            summarize_posterior(&draws, &constraint(), SummaryScale::Logit),
            Err(BenchError::InsufficientSample { needed: 2, got: 1 })
        );
    }
}
