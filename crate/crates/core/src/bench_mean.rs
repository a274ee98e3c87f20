//! Closed-form two-stage mean benchmarking and its posterior mean squared error.
//!
//! Minimizes the posterior expected loss
//! `sum_ij xi_ij (t_ij - theta_ij)^2 + sum_i phi_i (d_i - theta_iw)^2` subject to
//! `sum_j w_ij t_ij = d_i` for every area and `sum_i eta_i d_i = p`. With
//! `s_i = sum_j w_ij^2 / xi_ij` and `q = sum_k eta_k^2 s_k / (1 + phi_k s_k)`
//! the minimizer moves every Bayes estimate by
//! `(p - theta_w) eta_i w_ij / (xi_ij (1 + phi_i s_i) q)`.

use crate::error::{BenchError, Result};
use crate::posterior::PosteriorSummary;
use crate::types::{dot, BenchmarkProblem, BenchmarkSolution};
use crate::validate::validate_problem;

/// Quantities shared by the unit- and area-level closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanBenchmarkIntermediates {
    /// `s_i = sum_j w_ij^2 / xi_ij`.
    pub s: Vec<f64>,
    /// `q = sum_k eta_k^2 s_k / (1 + phi_k s_k)`.
    pub q: f64,
    /// `sum_i eta_i sum_j w_ij theta^B_ij`.
    pub theta_tilde_w: f64,
    /// `p - theta_tilde_w`, the total correction the constraints force.
    pub correction_scale: f64,
}

pub(crate) fn ensure_valid(problem: &BenchmarkProblem) -> Result<()> {
    let violations = validate_problem(problem);
    if violations.is_empty() {
        return Ok(());
    }
    let msg = violations
        .iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    Err(BenchError::InvalidInput(msg))
}

/// Computes `s`, `q` and the correction for a validated problem.
pub fn intermediates(problem: &BenchmarkProblem) -> Result<MeanBenchmarkIntermediates> {
    ensure_valid(problem)?;
    let c = &problem.constraint;
    let s: Vec<f64> = c
        .unit_weights
        .iter()
        .zip(&problem.loss.unit_loss)
        .map(|(w, xi)| w.iter().zip(xi).map(|(w, x)| w * w / x).sum())
        .collect();
    let q: f64 = c
        .area_weights
        .iter()
        .zip(&s)
        .zip(&problem.loss.area_loss)
        .map(|((eta, s), phi)| eta * eta * s / (1.0 + phi * s))
        .sum();
    if !(q > 0.0 && q.is_finite()) {
        return Err(BenchError::NumericDegeneracy(format!(
            "q = {q}; no area carries any share of the correction"
        )));
    }
    let theta_tilde_w = problem.bayes_aggregate();
    if !theta_tilde_w.is_finite() {
        return Err(BenchError::NumericDegeneracy(
            "weighted aggregate of the Bayes estimates is not finite".into(),
        ));
    }
    Ok(MeanBenchmarkIntermediates {
        s,
        q,
        theta_tilde_w,
        correction_scale: c.target - theta_tilde_w,
    })
}

/// Two-stage benchmarked Bayes estimates at the unit and area level.
pub fn benchmark_mean(problem: &BenchmarkProblem) -> Result<BenchmarkSolution> {
    let im = intermediates(problem)?;
    let c = &problem.constraint;
    let mut unit_estimates = Vec::with_capacity(problem.num_areas());
    let mut area_estimates = Vec::with_capacity(problem.num_areas());
    for i in 0..problem.num_areas() {
        let w = &c.unit_weights[i];
        let xi = &problem.loss.unit_loss[i];
        let theta = &problem.bayes_estimates[i];
        let phi = problem.loss.area_loss[i];
        let share = im.correction_scale * c.area_weights[i] / ((1.0 + phi * im.s[i]) * im.q);
        unit_estimates.push(
            theta
                .iter()
                .zip(w)
                .zip(xi)
                .map(|((t, w), x)| t + share * w / x)
                .collect(),
        );
        area_estimates.push(dot(w, theta) + share * im.s[i]);
    }
    Ok(BenchmarkSolution {
        unit_estimates,
        area_estimates,
        unit_pmse: None,
        area_pmse: None,
        scheme_tag: String::from("benchmarked"),
    })
}

/// Raked estimates `p theta^B / theta_w` at both levels.
pub fn benchmark_raked(problem: &BenchmarkProblem) -> Result<BenchmarkSolution> {
    for (i, area) in problem.bayes_estimates.iter().enumerate() {
        if let Some((j, t)) = area.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
            return Err(BenchError::InvalidInput(format!(
                "raking needs positive Bayes estimates; unit {} of area {} is {t}",
                j + 1,
                i + 1
            )));
        }
    }
    let theta_w = problem.bayes_aggregate();
    if !(theta_w > 0.0) {
        return Err(BenchError::InvalidInput(format!(
            "weighted aggregate of the Bayes estimates is {theta_w}"
        )));
    }
    let ratio = problem.constraint.target / theta_w;
    Ok(BenchmarkSolution {
        unit_estimates: problem
            .bayes_estimates
            .iter()
            .map(|a| a.iter().map(|t| t * ratio).collect())
            .collect(),
        area_estimates: problem
            .bayes_area_means()
            .into_iter()
            .map(|m| m * ratio)
            .collect(),
        unit_pmse: None,
        area_pmse: None,
        scheme_tag: String::from("raked"),
    })
}

/// Fills the PMSE fields: posterior variance plus the squared distance from the
/// posterior mean.
pub fn pmse(solution: &BenchmarkSolution, posterior: &PosteriorSummary) -> Result<BenchmarkSolution> {
    let m = solution.area_estimates.len();
    if posterior.var_theta.len() != m
        || posterior.var_area.len() != m
        || posterior.mean_theta.len() != m
        || posterior.mean_area.len() != m
    {
        return Err(BenchError::MissingInput(format!(
            "posterior summary covers {} areas, solution has {m}",
            posterior.var_area.len()
        )));
    }
    let mut unit_pmse = Vec::with_capacity(m);
    for i in 0..m {
        let est = &solution.unit_estimates[i];
        if posterior.var_theta[i].len() != est.len() || posterior.mean_theta[i].len() != est.len()
        {
            return Err(BenchError::MissingInput(format!(
                "posterior variances missing for units of area {}",
                i + 1
            )));
        }
        unit_pmse.push(
            est.iter()
                .zip(&posterior.mean_theta[i])
                .zip(&posterior.var_theta[i])
                .map(|((e, mean), v)| v + (mean - e).powi(2))
                .collect(),
        );
    }
    let area_pmse = solution
        .area_estimates
        .iter()
        .zip(&posterior.mean_area)
        .zip(&posterior.var_area)
        .map(|((e, mean), v)| v + (mean - e).powi(2))
        .collect();
    Ok(BenchmarkSolution {
        unit_pmse: Some(unit_pmse),
        area_pmse: Some(area_pmse),
        ..solution.clone()
    })
}

/// Percent increase of the posterior root MSE of the benchmarked area estimate
/// over the posterior standard deviation of the area mean,
/// `100 (sqrt(PMSE_i) - sqrt(V_i)) / sqrt(V_i)`.
///
/// Areas with zero posterior variance get `None`.
pub fn percent_prmse_increase(
    solution: &BenchmarkSolution,
    posterior: &PosteriorSummary,
) -> Result<Vec<Option<f64>>> {
    let filled;
    let area_pmse = match &solution.area_pmse {
        Some(p) => p,
        None => {
            filled = pmse(solution, posterior)?;
            filled.area_pmse.as_ref().expect("pmse fills area_pmse")
        }
    };
    Ok(area_pmse
        .iter()
        .zip(&posterior.var_area)
        .map(|(&pm, &v)| percent_increase(pm, v))
        .collect())
}

/// Unit-level analogue of [`percent_prmse_increase`].
pub fn unit_percent_prmse_increase(
    solution: &BenchmarkSolution,
    posterior: &PosteriorSummary,
) -> Result<Vec<Vec<Option<f64>>>> {
    let filled = pmse(solution, posterior)?;
    let unit_pmse = filled.unit_pmse.expect("pmse fills unit_pmse");
    Ok(unit_pmse
        .iter()
        .zip(&posterior.var_theta)
        .map(|(p, v)| p.iter().zip(v).map(|(&p, &v)| percent_increase(p, v)).collect())
        .collect())
}

fn percent_increase(pmse: f64, var: f64) -> Option<f64> {
    if var > 0.0 && var.is_finite() {
        let sd = var.sqrt();
        Some(100.0 * (pmse.sqrt() - sd) / sd)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ConstraintWeights, LossWeights};
    use nalgebra::DMatrix;

    fn problem(target: f64) -> BenchmarkProblem {
        BenchmarkProblem {
            bayes_estimates: vec![vec![0.2, 0.4], vec![0.1, 0.3, 0.5]],
            constraint: ConstraintWeights {
                unit_weights: vec![vec![0.5, 0.5], vec![0.2, 0.3, 0.5]],
                area_weights: vec![0.4, 0.6],
                target,
            },
            loss: LossWeights {
                unit_loss: vec![vec![1.0, 2.0], vec![0.5, 1.5, 3.0]],
                area_loss: vec![0.7, 2.0],
            },
            posterior: None,
        }
    }

    #[test]
    fn target_already_met_leaves_bayes_unchanged() {
        let p0 = problem(0.0);
        let target = p0.bayes_aggregate();
        let p = problem(target);
        let sol = benchmark_mean(&p).unwrap();
        assert_eq!(sol.unit_estimates, p.bayes_estimates);
        assert_eq!(sol.area_estimates, p.bayes_area_means());
    }

    #[test]
    fn single_unit_single_area_hits_target() {
        for (xi, phi) in [(1.0, 1.0), (0.3, 5.0), (7.0, 0.0)] {
            let p = BenchmarkProblem {
                bayes_estimates: vec![vec![0.8]],
                constraint: ConstraintWeights {
                    unit_weights: vec![vec![1.0]],
                    area_weights: vec![1.0],
                    target: 0.35,
                },
                loss: LossWeights {
                    unit_loss: vec![vec![xi]],
                    area_loss: vec![phi],
                },
                posterior: None,
            };
            let sol = benchmark_mean(&p).unwrap();
            assert!((sol.area_estimates[0] - 0.35).abs() < 1e-15);
            assert!((sol.unit_estimates[0][0] - 0.35).abs() < 1e-15);
        }
    }

    #[test]
    fn constraints_hold() {
        let p = problem(0.5);
        let sol = benchmark_mean(&p).unwrap();
        assert!(sol.residuals(&p.constraint).within(1e-12));
    }

    #[test]
    fn loss_equal_to_unit_weights_gives_equal_shifts() {
        let mut p = problem(0.5);
        p.loss.unit_loss = p.constraint.unit_weights.clone();
        p.loss.area_loss = p.constraint.area_weights.clone();
        let sol = benchmark_mean(&p).unwrap();
        let eta = &p.constraint.area_weights;
        let denom: f64 = eta.iter().map(|e| e * e / (1.0 + e)).sum();
        let corr = 0.5 - p.bayes_aggregate();
        for i in 0..2 {
            let expected = corr * eta[i] / (1.0 + eta[i]) / denom;
            for (b, e) in p.bayes_estimates[i].iter().zip(&sol.unit_estimates[i]) {
                assert!((e - b - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raked_closed_form() {
        let p = BenchmarkProblem {
            bayes_estimates: vec![vec![0.2, 0.4]],
            constraint: ConstraintWeights {
                unit_weights: vec![vec![0.5, 0.5]],
                area_weights: vec![1.0],
                target: 0.45,
            },
            loss: LossWeights::constant(&[vec![0.0, 0.0]]),
            posterior: None,
        };
        let sol = benchmark_raked(&p).unwrap();
        assert!((sol.unit_estimates[0][0] - 0.3).abs() < 1e-15);
        assert!((sol.unit_estimates[0][1] - 0.6).abs() < 1e-15);
        assert!((sol.area_estimates[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn raked_rejects_nonpositive() {
        let mut p = problem(0.3);
        p.bayes_estimates[1][0] = 0.0;
        assert!(matches!(benchmark_raked(&p), Err(BenchError::InvalidInput(_))));
    }

    #[test]
    fn invalid_problem_is_rejected() {
        let mut p = problem(0.3);
        p.loss.unit_loss[0][1] = -1.0;
        assert!(matches!(benchmark_mean(&p), Err(BenchError::InvalidInput(_))));
    }

    fn one_area_posterior(var_area: f64) -> PosteriorSummary {
        PosteriorSummary {
            mean_theta: vec![vec![0.3]],
            var_theta: vec![vec![var_area]],
            within_area_cov: vec![DMatrix::from_element(1, 1, var_area)],
            mean_area: vec![0.3],
            var_area: vec![var_area],
            retained_draws: 2,
        }
    }

    #[test]
    fn pmse_and_prmse_arithmetic() {
        let post = one_area_posterior(0.04);
        let sol = BenchmarkSolution {
            unit_estimates: vec![vec![0.33]],
            area_estimates: vec![0.33],
            unit_pmse: None,
            area_pmse: None,
            scheme_tag: "x".into(),
        };
        let filled = pmse(&sol, &post).unwrap();
        assert!((filled.area_pmse.as_ref().unwrap()[0] - 0.0409).abs() < 1e-15);
        let pct = percent_prmse_increase(&filled, &post).unwrap();
        let expected = 100.0 * (0.0409f64.sqrt() - 0.2) / 0.2;
        assert!((pct[0].unwrap() - expected).abs() < 1e-12);
        assert!((pct[0].unwrap() - 1.1187).abs() < 1e-4);
    }

    #[test]
    fn zero_adjustment_pmse_is_variance() {
        let post = one_area_posterior(0.04);
        let sol = BenchmarkSolution {
            unit_estimates: vec![vec![0.3]],
            area_estimates: vec![0.3],
            unit_pmse: None,
            area_pmse: None,
            scheme_tag: "x".into(),
        };
        let filled = pmse(&sol, &post).unwrap();
        assert_eq!(filled.area_pmse.unwrap()[0], 0.04);
        assert_eq!(filled.unit_pmse.unwrap()[0][0], 0.04);
        assert_eq!(percent_prmse_increase(&sol, &post).unwrap()[0], Some(0.0));
    }

    #[test]
    fn zero_variance_gives_missing_prmse() {
        let post = one_area_posterior(0.0);
        let sol = BenchmarkSolution {
            unit_estimates: vec![vec![0.31]],
            area_estimates: vec![0.31],
            unit_pmse: None,
            area_pmse: None,
            scheme_tag: "x".into(),
        };
        assert_eq!(percent_prmse_increase(&sol, &post).unwrap()[0], None);
    }

    #[test]
    fn pmse_needs_matching_posterior() {
        let post = one_area_posterior(0.04);
        let sol = benchmark_mean(&problem(0.4)).unwrap();
        assert!(matches!(pmse(&sol, &post), Err(BenchError::MissingInput(_))));
    }
}
