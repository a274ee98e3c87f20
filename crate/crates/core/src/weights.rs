//! Constraint weights from survey design weights and the loss-weight schemes.

use std::fmt;
use std::str::FromStr;

use crate::error::{BenchError, Result};
use crate::posterior::PosteriorSummary;
use crate::types::{dot, ConstraintWeights, LossWeights, SurveyDataset};

/// Normalizes design weights into constraint weights.
///
/// `w_ij = w*_ij / sum_j w*_ij`, `eta_i = sum_j w*_ij / sum_ij w*_ij` and the
/// target is the weighted sample proportion of positive responses.
pub fn constraint_weights_from_survey(data: &SurveyDataset) -> Result<ConstraintWeights> {
    let mut unit_weights = Vec::with_capacity(data.num_areas());
    let mut area_totals = Vec::with_capacity(data.num_areas());
    let mut weighted_positives = 0.0;
    for area in data.areas() {
        let total: f64 = area.units.iter().map(|u| u.survey_weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(BenchError::InvalidInput(format!(
                "area {} has total survey weight {total}",
                area.area_id
            )));
        }
        unit_weights.push(area.units.iter().map(|u| u.survey_weight / total).collect());
        weighted_positives += area
            .units
            .iter()
            .filter(|u| u.response)
            .map(|u| u.survey_weight)
            .sum::<f64>();
        area_totals.push(total);
    }
    let grand_total: f64 = area_totals.iter().sum();
    let area_weights = area_totals.iter().map(|t| t / grand_total).collect();
    Ok(ConstraintWeights {
        unit_weights,
        area_weights,
        target: weighted_positives / grand_total,
    })
}

/// Choice of loss weights `xi_ij`, `phi_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossScheme {
    /// `xi_ij = phi_i = 1`.
    Constant,
    /// Reciprocal posterior variances at both levels.
    InverseVariance,
    /// Weights under which the benchmarked estimator is the raked estimator.
    /// `None` picks `g = 2 max_i 1/eta_i`.
    Raked { g: Option<f64> },
    /// Inverse variance, with the area term multiplied by the area sample size.
    DomainWeighted,
}

impl LossScheme {
    /// Short tag used in file names and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            LossScheme::Constant => "constant",
            LossScheme::InverseVariance => "inverse_variance",
            LossScheme::Raked { .. } => "raked",
            LossScheme::DomainWeighted => "domain_weighted",
        }
    }

    pub fn raked() -> Self {
        LossScheme::Raked { g: None }
    }
}

impl fmt::Display for LossScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossScheme::Raked { g: Some(g) } => write!(f, "raked:{g}"),
            other => f.write_str(other.tag()),
        }
    }
}

impl FromStr for LossScheme {
    type Err = BenchError;

    /// Accepts `constant`, `inverse_variance`, `raked`, `raked:<g>` and
    /// `domain_weighted` (plus a few short aliases).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let scheme = match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" | "const" => LossScheme::Constant,
            "inverse_variance" | "invvar" | "iv" => LossScheme::InverseVariance,
            "domain_weighted" | "dw" => LossScheme::DomainWeighted,
            "raked" => {
                let g = arg
                    .map(|a| {
                        a.parse::<f64>().map_err(|_| {
                            BenchError::InvalidInput(format!("bad raking constant '{a}'"))
                        })
                    })
                    .transpose()?;
                return Ok(LossScheme::Raked { g });
            }
            _ => {
                return Err(BenchError::InvalidInput(format!(
                    "unknown loss scheme '{s}'"
                )))
            }
        };
        if arg.is_some() {
            return Err(BenchError::InvalidInput(format!(
                "scheme '{name}' takes no parameter"
            )));
        }
        Ok(scheme)
    }
}

/// Builds the loss weights of `scheme` for the given Bayes estimates.
pub fn make_loss_weights(
    scheme: LossScheme,
    bayes_estimates: &[Vec<f64>],
    constraint: &ConstraintWeights,
    posterior: Option<&PosteriorSummary>,
) -> Result<LossWeights> {
    match scheme {
        LossScheme::Constant => Ok(LossWeights::constant(bayes_estimates)),
        LossScheme::InverseVariance => inverse_variance(posterior, |_| 1.0),
        LossScheme::DomainWeighted => inverse_variance(posterior, |n| n as f64),
        LossScheme::Raked { g } => raked(bayes_estimates, constraint, g),
    }
}

/// The default raking constant, `2 max_i 1/eta_i`.
pub fn default_raking_constant(area_weights: &[f64]) -> f64 {
    2.0 * area_weights.iter().map(|e| 1.0 / e).fold(0.0, f64::max)
}

fn inverse_variance(
    posterior: Option<&PosteriorSummary>,
    area_factor: impl Fn(usize) -> f64,
) -> Result<LossWeights> {
    let post = posterior.ok_or_else(|| {
        BenchError::MissingInput("variance-based loss weights need a posterior summary".into())
    })?;
    let mut unit_loss = Vec::with_capacity(post.num_areas());
    for (i, vars) in post.var_theta.iter().enumerate() {
        let row = vars
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if v > 0.0 && v.is_finite() {
                    Ok(1.0 / v)
                } else {
                    Err(BenchError::InvalidInput(format!(
                        "posterior variance of unit {} in area {} is {v}",
                        j + 1,
                        i + 1
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        unit_loss.push(row);
    }
    let area_loss = post
        .var_area
        .iter()
        .zip(&post.var_theta)
        .enumerate()
        .map(|(i, (&v, units))| {
            if v > 0.0 && v.is_finite() {
                Ok(area_factor(units.len()) / v)
            } else {
                Err(BenchError::InvalidInput(format!(
                    "posterior variance of the mean of area {} is {v}",
                    i + 1
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossWeights {
        unit_loss,
        area_loss,
    })
}

fn raked(
    bayes: &[Vec<f64>],
    constraint: &ConstraintWeights,
    g: Option<f64>,
) -> Result<LossWeights> {
    if constraint.area_weights.iter().any(|&e| e <= 0.0) {
        return Err(BenchError::InvalidInput(
            "raked weights need every area weight to be positive".into(),
        ));
    }
    let lower = constraint
        .area_weights
        .iter()
        .map(|e| 1.0 / e)
        .fold(0.0, f64::max);
    let g = g.unwrap_or_else(|| default_raking_constant(&constraint.area_weights));
    if !(g > lower && g.is_finite()) {
        return Err(BenchError::InvalidInput(format!(
            "raking constant {g} must exceed max_i 1/eta_i = {lower}"
        )));
    }
    let mut unit_loss = Vec::with_capacity(bayes.len());
    let mut area_loss = Vec::with_capacity(bayes.len());
    for (i, (theta, w)) in bayes.iter().zip(&constraint.unit_weights).enumerate() {
        let mut row = Vec::with_capacity(theta.len());
        for (j, (&t, &wij)) in theta.iter().zip(w).enumerate() {
            if !(t > 0.0) {
                return Err(BenchError::InvalidInput(format!(
                    "raked weights need positive Bayes estimates; unit {} of area {} is {t}",
                    j + 1,
                    i + 1
                )));
            }
            if !(wij > 0.0) {
                return Err(BenchError::InvalidInput(format!(
                    "raked weights need positive unit weights; unit {} of area {} is {wij}",
                    j + 1,
                    i + 1
                )));
            }
            row.push(wij / t);
        }
        unit_loss.push(row);
        let area_mean = dot(w, theta);
        area_loss.push((g * constraint.area_weights[i] - 1.0) / area_mean);
    }
    Ok(LossWeights {
        unit_loss,
        area_loss,
    })
}
