//! Two-stage mean benchmarking of vector-valued parameters with matrix weights.
//!
//! Loss `sum_ij (t_ij - theta_ij)^T Lambda_ij (t_ij - theta_ij) + sum_i (d_i - theta_iw)^T Psi_i (d_i - theta_iw)`
//! under `sum_j W_ij t_ij = d_i` and `sum_i Gamma_i d_i = p`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{BenchError, Result};
use crate::tolerance;

/// Matrix-weighted benchmarking inputs. All matrices are `dim x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBenchmarkProblem {
    pub dim: usize,
    /// `theta^B_ij` per area and unit.
    pub bayes_estimates: Vec<Vec<DVector<f64>>>,
    /// `W_ij`, mapping unit vectors onto the area mean.
    pub unit_maps: Vec<Vec<DMatrix<f64>>>,
    /// `Gamma_i`, mapping area vectors onto the overall target.
    pub area_maps: Vec<DMatrix<f64>>,
    /// `Lambda_ij`, symmetric positive definite.
    pub unit_loss: Vec<Vec<DMatrix<f64>>>,
    /// `Psi_i`, symmetric positive definite.
    pub area_loss: Vec<DMatrix<f64>>,
    pub target: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBenchmarkSolution {
    pub unit_estimates: Vec<Vec<DVector<f64>>>,
    pub area_estimates: Vec<DVector<f64>>,
    /// `R^{-1} (p - theta_w)`.
    pub multiplier: DVector<f64>,
}

impl MultiBenchmarkProblem {
    pub fn num_areas(&self) -> usize {
        self.bayes_estimates.len()
    }

    /// `sum_j W_ij theta^B_ij` per area.
    pub fn bayes_area_means(&self) -> Vec<DVector<f64>> {
        self.bayes_estimates
            .iter()
            .zip(&self.unit_maps)
            .map(|(thetas, maps)| {
                thetas
                    .iter()
                    .zip(maps)
                    .fold(DVector::zeros(self.dim), |acc, (t, w)| acc + w * t)
            })
            .collect()
    }

    /// `sum_i Gamma_i sum_j W_ij theta^B_ij`.
    pub fn bayes_aggregate(&self) -> DVector<f64> {
        self.bayes_area_means()
            .iter()
            .zip(&self.area_maps)
            .fold(DVector::zeros(self.dim), |acc, (m, g)| acc + g * m)
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let d = self.dim;
        let m = self.num_areas();
        if d == 0 || m == 0 {
            return Err(BenchError::InvalidInput("empty multivariate problem".into()));
        }
        if self.unit_maps.len() != m
            || self.area_maps.len() != m
            || self.unit_loss.len() != m
            || self.area_loss.len() != m
        {
            return Err(BenchError::InvalidInput(
                "per-area inputs disagree on the number of areas".into(),
            ));
        }
        if self.target.len() != d {
            return Err(BenchError::InvalidInput(format!(
                "target has length {}, expected {d}",
                self.target.len()
            )));
        }
        let square = |mat: &DMatrix<f64>| mat.nrows() == d && mat.ncols() == d;
        for i in 0..m {
            let n = self.bayes_estimates[i].len();
            if n == 0 {
                return Err(BenchError::InvalidInput(format!("area {} has no units", i + 1)));
            }
            if self.unit_maps[i].len() != n || self.unit_loss[i].len() != n {
                return Err(BenchError::InvalidInput(format!(
                    "area {}: unit inputs disagree on the number of units",
                    i + 1
                )));
            }
            if !square(&self.area_maps[i]) || !square(&self.area_loss[i]) {
                return Err(BenchError::InvalidInput(format!(
                    "area {}: area matrices must be {d}x{d}",
                    i + 1
                )));
            }
            for j in 0..n {
                if self.bayes_estimates[i][j].len() != d
                    || !square(&self.unit_maps[i][j])
                    || !square(&self.unit_loss[i][j])
                {
                    return Err(BenchError::InvalidInput(format!(
                        "area {} unit {}: expected dimension {d}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shape checks plus symmetric positive definiteness of every loss matrix.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        for i in 0..self.num_areas() {
            spd_factor(&self.area_loss[i], || format!("Psi of area {}", i + 1))?;
            for (j, l) in self.unit_loss[i].iter().enumerate() {
                spd_factor(l, || format!("Lambda of area {} unit {}", i + 1, j + 1))?;
            }
        }
        Ok(())
    }
}

fn spd_factor(
    mat: &DMatrix<f64>,
    name: impl Fn() -> String,
) -> Result<Cholesky<f64, Dyn>> {
    let scale = mat.amax().max(1.0);
    if (mat - mat.transpose()).amax() > tolerance::IDENTITY * scale {
        return Err(BenchError::InvalidInput(format!("{} is not symmetric", name())));
    }
    mat.clone()
        .cholesky()
        .ok_or_else(|| BenchError::InvalidInput(format!("{} is not positive definite", name())))
}

/// Solves `mat x = rhs` after checking the reciprocal condition number.
fn guarded_solve(
    mat: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    name: impl Fn() -> String,
) -> Result<DMatrix<f64>> {
    let sv = mat.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || !(min / max >= tolerance::RCOND) {
        return Err(BenchError::NumericDegeneracy(format!(
            "{} is singular (reciprocal condition {:e})",
            name(),
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    mat.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| BenchError::NumericDegeneracy(format!("{} is singular", name())))
}

/// Closed-form matrix-weighted two-stage benchmarked estimates.
///
/// With `s_i = sum_j W_ij Lambda_ij^{-1} W_ij^T`, `K_i = (Psi_i + s_i^{-1})^{-1}`
/// and `R = sum_i Gamma_i K_i Gamma_i^T`, the area estimates move by
/// `K_i Gamma_i^T R^{-1} (p - theta_w)` and each unit by
/// `Lambda_ij^{-1} W_ij^T s_i^{-1}` times that.
pub fn benchmark_mean_multi(problem: &MultiBenchmarkProblem) -> Result<MultiBenchmarkSolution> {
    problem.validate()?;
    let d = problem.dim;
    let m = problem.num_areas();

    // Lambda_ij^{-1} W_ij^T for every unit, and s_i.
    let mut lambda_inv_wt: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(m);
    let mut s = Vec::with_capacity(m);
    for i in 0..m {
        let mut per_unit = Vec::with_capacity(problem.unit_maps[i].len());
        let mut si = DMatrix::zeros(d, d);
        for (j, (w, l)) in problem.unit_maps[i].iter().zip(&problem.unit_loss[i]).enumerate() {
            let chol = spd_factor(l, || format!("Lambda of area {} unit {}", i + 1, j + 1))?;
            let x = chol.solve(&w.transpose());
            si += w * &x;
            per_unit.push(x);
        }
        lambda_inv_wt.push(per_unit);
        s.push(si);
    }

    // s_i^{-1} and K_i Gamma_i^T.
    let eye = DMatrix::identity(d, d);
    let mut s_inv = Vec::with_capacity(m);
    let mut k_gamma_t = Vec::with_capacity(m);
    let mut r = DMatrix::zeros(d, d);
    for i in 0..m {
        let si_inv = guarded_solve(&s[i], &eye, || format!("s of area {}", i + 1))?;
        let inner = &problem.area_loss[i] + &si_inv;
        let kg = guarded_solve(&inner, &problem.area_maps[i].transpose(), || {
            format!("Psi + s^-1 of area {}", i + 1)
        })?;
        r += &problem.area_maps[i] * &kg;
        s_inv.push(si_inv);
        k_gamma_t.push(kg);
    }

    let correction = &problem.target - problem.bayes_aggregate();
    let multiplier = guarded_solve(&r, &DMatrix::from_column_slice(d, 1, correction.as_slice()), || {
        "aggregate matrix R".to_string()
    })?
    .column(0)
    .into_owned();

    let area_means = problem.bayes_area_means();
    let mut unit_estimates = Vec::with_capacity(m);
    let mut area_estimates = Vec::with_capacity(m);
    for i in 0..m {
        let area_shift = &k_gamma_t[i] * &multiplier;
        let unit_dir = &s_inv[i] * &area_shift;
        unit_estimates.push(
            problem.bayes_estimates[i]
                .iter()
                .zip(&lambda_inv_wt[i])
                .map(|(t, x)| t + x * &unit_dir)
                .collect(),
        );
        area_estimates.push(&area_means[i] + area_shift);
    }
    Ok(MultiBenchmarkSolution {
        unit_estimates,
        area_estimates,
        multiplier,
    })
}

impl MultiBenchmarkSolution {
    /// Largest residuals of `sum_j W_ij t_ij = d_i` and `sum_i Gamma_i d_i = p`.
    pub fn residuals(&self, problem: &MultiBenchmarkProblem) -> (f64, f64) {
        let mut unit_to_area: f64 = 0.0;
        let mut agg = DVector::zeros(problem.dim);
        for i in 0..problem.num_areas() {
            let mean = self.unit_estimates[i]
                .iter()
                .zip(&problem.unit_maps[i])
                .fold(DVector::zeros(problem.dim), |acc, (t, w)| acc + w * t);
            unit_to_area = unit_to_area.max((mean - &self.area_estimates[i]).amax());
            agg += &problem.area_maps[i] * &self.area_estimates[i];
        }
        (unit_to_area, (agg - &problem.target).amax())
    }
}
