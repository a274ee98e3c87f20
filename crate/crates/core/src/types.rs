//! Domain types shared by every estimator.
//!
//! Per-unit quantities are stored ragged by area (`Vec<Vec<f64>>`, outer index
//! is the area, inner index the unit within the area). Areas keep their input
//! order everywhere so outputs line up positionally with inputs.

use crate::error::{BenchError, Result};
use crate::posterior::PosteriorSummary;
use crate::tolerance;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub unit_id: String,
    pub response: bool,
    /// Design (person) weight before any normalization.
    pub survey_weight: f64,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaBlock {
    pub area_id: String,
    pub units: Vec<UnitRecord>,
}

/// Unit-level survey records grouped into areas (domains).
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    areas: Vec<AreaBlock>,
    num_covariates: usize,
}

impl SurveyDataset {
    pub fn new(areas: Vec<AreaBlock>) -> Result<Self> {
        if areas.is_empty() {
            return Err(BenchError::InvalidInput("dataset has no areas".into()));
        }
        let num_covariates = areas
            .iter()
            .flat_map(|a| a.units.first())
            .map(|u| u.covariates.len())
            .next()
            .unwrap_or(0);
        if num_covariates == 0 {
            return Err(BenchError::InvalidInput(
                "units need at least one covariate".into(),
            ));
        }
        for area in &areas {
            if area.units.is_empty() {
                return Err(BenchError::InvalidInput(format!(
                    "area {} has no units",
                    area.area_id
                )));
            }
            for unit in &area.units {
                if !(unit.survey_weight.is_finite() && unit.survey_weight > 0.0) {
                    return Err(BenchError::InvalidInput(format!(
                        "unit {} in area {} has nonpositive survey weight {}",
                        unit.unit_id, area.area_id, unit.survey_weight
                    )));
                }
                if unit.covariates.len() != num_covariates {
                    return Err(BenchError::InvalidInput(format!(
                        "unit {} in area {} has {} covariates, expected {}",
                        unit.unit_id,
                        area.area_id,
                        unit.covariates.len(),
                        num_covariates
                    )));
                }
                if unit.covariates.iter().any(|x| !x.is_finite()) {
                    return Err(BenchError::InvalidInput(format!(
                        "unit {} in area {} has a nonfinite covariate",
                        unit.unit_id, area.area_id
                    )));
                }
            }
        }
        Ok(Self {
            areas,
            num_covariates,
        })
    }

    pub fn areas(&self) -> &[AreaBlock] {
        &self.areas
    }

    pub fn num_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn num_units(&self) -> usize {
        self.areas.iter().map(|a| a.units.len()).sum()
    }

    pub fn area_sizes(&self) -> Vec<usize> {
        self.areas.iter().map(|a| a.units.len()).collect()
    }

    pub fn num_covariates(&self) -> usize {
        self.num_covariates
    }

    /// Responses in stacked (area-major) order.
    pub fn responses(&self) -> Vec<bool> {
        self.units().map(|u| u.response).collect()
    }

    pub fn units(&self) -> impl Iterator<Item = &UnitRecord> {
        self.areas.iter().flat_map(|a| a.units.iter())
    }
}

/// Benchmarking constraint weights `w_i`, `eta` and the overall target `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintWeights {
    pub unit_weights: Vec<Vec<f64>>,
    pub area_weights: Vec<f64>,
    pub target: f64,
}

impl ConstraintWeights {
    /// Checks normalization of externally supplied weights.
    ///
    /// Sums within `NORMALIZATION_EXACT` of one are accepted as is, sums within
    /// `NORMALIZATION_REJECT` are rescaled with a warning, anything further off
    /// is rejected. Negative or nonfinite entries are always rejected.
    pub fn new(unit_weights: Vec<Vec<f64>>, area_weights: Vec<f64>, target: f64) -> Result<Self> {
        if unit_weights.len() != area_weights.len() {
            return Err(BenchError::InvalidInput(format!(
                "{} unit weight vectors for {} area weights",
                unit_weights.len(),
                area_weights.len()
            )));
        }
        if !target.is_finite() {
            return Err(BenchError::InvalidInput("target is not finite".into()));
        }
        let unit_weights = unit_weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| normalize(w, &format!("unit weights of area {}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let area_weights = normalize(area_weights, "area weights")?;
        Ok(Self {
            unit_weights,
            area_weights,
            target,
        })
    }

    pub fn num_areas(&self) -> usize {
        self.area_weights.len()
    }

    /// `sum_i eta_i sum_j w_ij x_ij`.
    pub fn aggregate(&self, values: &[Vec<f64>]) -> f64 {
        self.area_weights
            .iter()
            .zip(self.area_means(values))
            .map(|(eta, m)| eta * m)
            .sum()
    }

    /// `sum_j w_ij x_ij` for every area.
    pub fn area_means(&self, values: &[Vec<f64>]) -> Vec<f64> {
        self.unit_weights
            .iter()
            .zip(values)
            .map(|(w, x)| dot(w, x))
            .collect()
    }
}

fn normalize(mut w: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(BenchError::InvalidInput(format!("{what} are empty")));
    }
    if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(BenchError::InvalidInput(format!(
            "{what} contain the invalid entry {bad}"
        )));
    }
    let sum: f64 = w.iter().sum();
    let gap = (sum - 1.0).abs();
    if gap > tolerance::NORMALIZATION_REJECT {
        return Err(BenchError::InvalidInput(format!("{what} sum to {sum}")));
    }
    if gap > tolerance::NORMALIZATION_EXACT {
        log::warn!("{what} sum to {sum}; renormalizing");
        w.iter_mut().for_each(|x| *x /= sum);
    }
    Ok(w)
}

/// Loss-function weights `xi_ij` (unit level) and `phi_i` (area level).
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub unit_loss: Vec<Vec<f64>>,
    pub area_loss: Vec<f64>,
}

impl LossWeights {
    /// `xi_ij = phi_i = 1`.
    pub fn constant(shape: &[Vec<f64>]) -> Self {
        Self {
            unit_loss: shape.iter().map(|a| vec![1.0; a.len()]).collect(),
            area_loss: vec![1.0; shape.len()],
        }
    }
}

/// Inputs of one two-stage benchmarking run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    pub bayes_estimates: Vec<Vec<f64>>,
    pub constraint: ConstraintWeights,
    pub loss: LossWeights,
    pub posterior: Option<PosteriorSummary>,
}

impl BenchmarkProblem {
    pub fn num_areas(&self) -> usize {
        self.bayes_estimates.len()
    }

    /// `sum_j w_ij theta^B_ij` for every area.
    pub fn bayes_area_means(&self) -> Vec<f64> {
        self.constraint.area_means(&self.bayes_estimates)
    }

    /// `sum_i eta_i sum_j w_ij theta^B_ij`.
    pub fn bayes_aggregate(&self) -> f64 {
        self.constraint.aggregate(&self.bayes_estimates)
    }

    /// The same problem with different loss weights.
    pub fn with_loss(&self, loss: LossWeights) -> Self {
        Self {
            loss,
            ..self.clone()
        }
    }
}

/// Benchmarked estimates at both levels, with optional PMSE.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSolution {
    pub unit_estimates: Vec<Vec<f64>>,
    pub area_estimates: Vec<f64>,
    pub unit_pmse: Option<Vec<Vec<f64>>>,
    pub area_pmse: Option<Vec<f64>>,
    pub scheme_tag: String,
}

/// Largest residuals of the two benchmarking constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResiduals {
    /// `max_i |sum_j w_ij theta_ij - delta_i|`.
    pub unit_to_area: f64,
    /// `|sum_i eta_i delta_i - p|`.
    pub area_to_target: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.unit_to_area.max(self.area_to_target)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.unit_to_area <= tol && self.area_to_target <= tol
    }
}

impl BenchmarkSolution {
    pub fn residuals(&self, constraint: &ConstraintWeights) -> ConstraintResiduals {
        let unit_to_area = constraint
            .area_means(&self.unit_estimates)
            .iter()
            .zip(&self.area_estimates)
            .map(|(m, d)| (m - d).abs())
            .fold(0.0, f64::max);
        let area_to_target = (dot(&constraint.area_weights, &self.area_estimates)
            - constraint.target)
            .abs();
        ConstraintResiduals {
            unit_to_area,
            area_to_target,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slightly_off_weights_are_renormalized() {
        let c = ConstraintWeights::new(vec![vec![0.5, 0.5 + 1e-9]], vec![1.0], 0.3).unwrap();
        let s: f64 = c.unit_weights[0].iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn badly_off_weights_are_rejected() {
        let err = ConstraintWeights::new(vec![vec![0.6, 0.6]], vec![1.0], 0.3).unwrap_err();
        assert!(matches!(err, BenchError::InvalidInput(_)));
        assert!(ConstraintWeights::new(vec![vec![1.5, -0.5]], vec![1.0], 0.3).is_err());
    }

    #[test]
    fn dataset_rejects_empty_areas_and_bad_weights() {
        let unit = |w: f64| UnitRecord {
            unit_id: "u".into(),
            response: true,
            survey_weight: w,
            covariates: vec![1.0],
        };
        let empty = AreaBlock {
            area_id: "a".into(),
            units: vec![],
        };
        assert!(SurveyDataset::new(vec![empty]).is_err());
        let zero = AreaBlock {
            area_id: "a".into(),
            units: vec![unit(0.0)],
        };
        assert!(SurveyDataset::new(vec![zero]).is_err());
        let ragged = AreaBlock {
            area_id: "a".into(),
            units: vec![
                unit(1.0),
                UnitRecord {
                    covariates: vec![1.0, 2.0],
                    ..unit(1.0)
                },
            ],
        };
        assert!(SurveyDataset::new(vec![ragged]).is_err());
    }
}
