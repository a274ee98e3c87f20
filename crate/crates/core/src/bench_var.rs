//! Two-stage benchmarking that also pins the weighted within-area variability
//! of the unit estimates.
//!
//! Only the case `xi_ij = w_ij` has a closed form: area estimates match the
//! mean-only benchmark and unit deviations from the area mean are the Bayes
//! deviations rescaled by `sqrt(h_i / d_i)`.

use crate::bench_mean::{ensure_valid, intermediates};
use crate::error::{BenchError, Result};
use crate::posterior::PosteriorSummary;
use crate::tolerance;
use crate::types::{dot, BenchmarkProblem, BenchmarkSolution, ConstraintWeights};

/// Target variability `h_i` and the Bayes spread `d_i` per area.
#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityTargets {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
}

impl VariabilityTargets {
    /// Pairs externally supplied targets with the Bayes spreads of `problem`.
    pub fn new(h: Vec<f64>, problem: &BenchmarkProblem) -> Result<Self> {
        if h.len() != problem.num_areas() {
            return Err(BenchError::InvalidInput(format!(
                "{} variability targets for {} areas",
                h.len(),
                problem.num_areas()
            )));
        }
        if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(BenchError::InvalidInput(format!(
                "variability target of area {} is {v}",
                i + 1
            )));
        }
        Ok(Self {
            d: bayes_spread(&problem.bayes_estimates, &problem.constraint),
            h,
        })
    }
}

/// `d_i = sum_j w_ij (theta_ij - sum_k w_ik theta_ik)^2`.
pub fn bayes_spread(values: &[Vec<f64>], constraint: &ConstraintWeights) -> Vec<f64> {
    values
        .iter()
        .zip(&constraint.unit_weights)
        .map(|(t, w)| weighted_spread(t, w))
        .collect()
}

fn weighted_spread(values: &[f64], w: &[f64]) -> f64 {
    let mean = dot(w, values);
    values
        .iter()
        .zip(w)
        .map(|(t, w)| w * (t - mean).powi(2))
        .sum()
}

/// Benchmarks the weighted means at both levels and the weighted
/// unit-level variability `sum_j w_ij (t_ij - d_i)^2 = h_i`.
pub fn benchmark_mean_and_variability(
    problem: &BenchmarkProblem,
    targets: &VariabilityTargets,
) -> Result<BenchmarkSolution> {
    ensure_valid(problem)?;
    let m = problem.num_areas();
    if targets.h.len() != m || targets.d.len() != m {
        return Err(BenchError::InvalidInput(format!(
            "variability targets cover {} areas, problem has {m}",
            targets.h.len()
        )));
    }
    for (i, (xi, w)) in problem
        .loss
        .unit_loss
        .iter()
        .zip(&problem.constraint.unit_weights)
        .enumerate()
    {
        let mismatch = xi
            .iter()
            .zip(w)
            .any(|(x, w)| (x - w).abs() > tolerance::IDENTITY * w.abs().max(1.0));
        if mismatch {
            return Err(BenchError::UnsupportedConfiguration(format!(
                "variability benchmarking needs unit loss weights equal to the unit weights (area {})",
                i + 1
            )));
        }
    }

    // With xi = w every s_i is 1, so the area shifts are the mean-only ones.
    let im = intermediates(problem)?;
    let c = &problem.constraint;
    let mut unit_estimates = Vec::with_capacity(m);
    let mut area_estimates = Vec::with_capacity(m);
    for i in 0..m {
        let theta = &problem.bayes_estimates[i];
        let w = &c.unit_weights[i];
        let phi = problem.loss.area_loss[i];
        let bayes_mean = dot(w, theta);
        let shift = im.correction_scale * c.area_weights[i] / ((1.0 + phi * im.s[i]) * im.q);
        let delta = bayes_mean + shift * im.s[i];
        let (h, d) = (targets.h[i], targets.d[i]);
        let units = if d > 0.0 {
            let scale = (h / d).sqrt();
            theta.iter().map(|t| delta + scale * (t - bayes_mean)).collect()
        } else if h == 0.0 {
            vec![delta; theta.len()]
        } else {
            return Err(BenchError::DegenerateSpread {
                area: i + 1,
                target: h,
            });
        };
        unit_estimates.push(units);
        area_estimates.push(delta);
    }
    Ok(BenchmarkSolution {
        unit_estimates,
        area_estimates,
        unit_pmse: None,
        area_pmse: None,
        scheme_tag: String::from("variability"),
    })
}

/// Posterior expectation of `sum_j w_ij (theta_ij - theta_iw)^2`, expanded
/// through the posterior moments:
/// `sum_j w_ij [V_ij + (m_ij - m_iw)^2] - 2 sum_j w_ij Cov(theta_ij, theta_iw) + V(theta_iw)`.
pub fn default_variability_targets(
    posterior: &PosteriorSummary,
    constraint: &ConstraintWeights,
) -> Result<VariabilityTargets> {
    let m = constraint.num_areas();
    if posterior.within_area_cov.len() != m || posterior.mean_theta.len() != m {
        return Err(BenchError::MissingInput(format!(
            "posterior covariances cover {} areas, need {m}",
            posterior.within_area_cov.len()
        )));
    }
    let mut h = Vec::with_capacity(m);
    for i in 0..m {
        let w = &constraint.unit_weights[i];
        let mean = &posterior.mean_theta[i];
        let cov = &posterior.within_area_cov[i];
        if cov.nrows() != w.len() || cov.ncols() != w.len() || mean.len() != w.len() {
            return Err(BenchError::MissingInput(format!(
                "posterior covariance of area {} has the wrong size",
                i + 1
            )));
        }
        let mean_w = dot(w, mean);
        let cov_with_mean = posterior.cov_with_area_mean(i, w);
        let var_w = crate::posterior::weighted_quadratic_form(cov, w);
        let spread: f64 = (0..w.len())
            .map(|j| w[j] * (cov[(j, j)] + (mean[j] - mean_w).powi(2)))
            .sum();
        let cross: f64 = w.iter().zip(&cov_with_mean).map(|(w, c)| w * c).sum();
        h.push((spread - 2.0 * cross + var_w).max(0.0));
    }
    Ok(VariabilityTargets {
        d: bayes_spread(&posterior.mean_theta, constraint),
        h,
    })
}
