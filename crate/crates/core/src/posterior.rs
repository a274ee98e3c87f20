//! Monte Carlo posterior moments of the unit-level parameters.

use nalgebra::DMatrix;

/// Posterior moments consumed by the variance-based loss weights, PMSE and
/// the default variability targets.
///
/// All per-unit vectors are ragged by area, in the same order as the
/// constraint weights they were summarized with.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// `E(theta_ij | y)` per area and unit.
    pub mean_theta: Vec<Vec<f64>>,
    /// `V(theta_ij | y)` per area and unit.
    pub var_theta: Vec<Vec<f64>>,
    /// `Cov(theta_ij, theta_ij' | y)` for each area, `n_i x n_i`.
    pub within_area_cov: Vec<DMatrix<f64>>,
    /// `E(sum_j w_ij theta_ij | y)` per area.
    pub mean_area: Vec<f64>,
    /// `V(sum_j w_ij theta_ij | y)` per area.
    pub var_area: Vec<f64>,
    pub retained_draws: usize,
}

impl PosteriorSummary {
    pub fn num_areas(&self) -> usize {
        self.mean_theta.len()
    }

    /// Builds a summary from per-area means and covariance blocks, deriving the
    /// unit variances and the weighted area moments.
    pub fn from_moments(
        mean_theta: Vec<Vec<f64>>,
        within_area_cov: Vec<DMatrix<f64>>,
        unit_weights: &[Vec<f64>],
        retained_draws: usize,
    ) -> Self {
        let var_theta = within_area_cov
            .iter()
            .map(|c| c.diagonal().iter().copied().collect())
            .collect();
        let mean_area = mean_theta
            .iter()
            .zip(unit_weights)
            .map(|(m, w)| m.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        let var_area = within_area_cov
            .iter()
            .zip(unit_weights)
            .map(|(c, w)| weighted_quadratic_form(c, w))
            .collect();
        Self {
            mean_theta,
            var_theta,
            within_area_cov,
            mean_area,
            var_area,
            retained_draws,
        }
    }

    /// `Cov(theta_ij, sum_j' w_ij' theta_ij' | y)` for each unit of area `i`.
    pub fn cov_with_area_mean(&self, area: usize, weights: &[f64]) -> Vec<f64> {
        let c = &self.within_area_cov[area];
        (0..c.nrows())
            .map(|j| (0..c.ncols()).map(|k| c[(j, k)] * weights[k]).sum())
            .collect()
    }
}

/// `w^T C w` as the full double sum.
pub fn weighted_quadratic_form(cov: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..w.len() {
        for k in 0..w.len() {
            acc += w[j] * w[k] * cov[(j, k)];
        }
    }
    acc
}
