//! Generic equality-constrained quadratic programs used as ground truth for the
//! closed-form benchmarked estimators.
//!
//! Problems have the form: minimize `(x - c)^T Q (x - c)` subject to `C x = r`,
//! solved through the saddle-point system `[Q C^T; C 0] [x; l] = [Q c; r]`.

use nalgebra::{DMatrix, DVector};

use crate::bench_multi::MultiBenchmarkProblem;
use crate::error::{BenchError, Result};
use crate::types::BenchmarkProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    /// Symmetric positive definite objective matrix.
    pub q: DMatrix<f64>,
    /// Unconstrained minimizer `c`.
    pub center: DVector<f64>,
    /// Constraint matrix `C`, one row per equality.
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl QuadraticProgram {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.q * &d))
    }

    /// `max |C x - r|`.
    pub fn infeasibility(&self, x: &DVector<f64>) -> f64 {
        (&self.constraints * x - &self.rhs).amax()
    }
}

/// Solves the KKT system with a dense LU factorization.
pub fn solve_kkt(qp: &QuadraticProgram) -> Result<DVector<f64>> {
    let n = qp.dim();
    let k = qp.constraints.nrows();
    if qp.q.nrows() != n || qp.q.ncols() != n {
        return Err(BenchError::InvalidInput(format!(
            "objective is {}x{}, expected {n}x{n}",
            qp.q.nrows(),
            qp.q.ncols()
        )));
    }
    if k > 0 && qp.constraints.ncols() != n || qp.rhs.len() != k {
        return Err(BenchError::InvalidInput(
            "constraint matrix and right-hand side do not match the problem size".into(),
        ));
    }
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q);
    if k > 0 {
        kkt.view_mut((0, n), (n, k)).copy_from(&qp.constraints.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&qp.constraints);
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(&qp.q * &qp.center));
    rhs.rows_mut(n, k).copy_from(&qp.rhs);

    let lu = kkt.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| BenchError::NumericDegeneracy("KKT matrix is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(BenchError::NumericDegeneracy(
            "KKT solve produced nonfinite values".into(),
        ));
    }
    Ok(sol.rows(0, n).into_owned())
}

/// Independent iterative solver: conjugate gradients restricted to the null
/// space of `C`, started from the projection of `c` onto the feasible set.
pub fn solve_projected_cg(qp: &QuadraticProgram, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = qp.dim();
    let c = &qp.constraints;
    let project: Box<dyn Fn(&DVector<f64>) -> DVector<f64>> = if c.nrows() == 0 {
        Box::new(|v: &DVector<f64>| v.clone())
    } else {
        let gram = (c * c.transpose())
            .cholesky()
            .ok_or_else(|| BenchError::NumericDegeneracy("constraints are rank deficient".into()))?;
        let c = c.clone();
        Box::new(move |v: &DVector<f64>| v - c.transpose() * gram.solve(&(&c * v)))
    };
    // feasible start: c - C^T (C C^T)^{-1} (C c - r)
    let mut x = if c.nrows() == 0 {
        qp.center.clone()
    } else {
        let gram = (c * c.transpose()).cholesky().expect("checked above");
        &qp.center - c.transpose() * gram.solve(&(c * &qp.center - &qp.rhs))
    };
    let mut r = project(&(-(&qp.q * (&x - &qp.center))));
    let mut d = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter.max(n) {
        if rr.sqrt() <= tol {
            break;
        }
        let qd = &qp.q * &d;
        let curvature = d.dot(&qd);
        if !(curvature > 0.0) {
            return Err(BenchError::NumericDegeneracy(
                "objective is not positive definite on the feasible set".into(),
            ));
        }
        let alpha = rr / curvature;
        x += alpha * &d;
        r = project(&(&r - alpha * qd));
        let rr_next = r.dot(&r);
        d = &r + (rr_next / rr) * &d;
        rr = rr_next;
    }
    Ok(x)
}

/// Stacked unit-level QP of a scalar benchmarking problem.
///
/// Variables are the unit estimates in area-major order. The objective blocks
/// are `Diag(xi_i) + phi_i w_i w_i^T` and the single constraint row is
/// `eta_i w_ij`.
pub fn encode_theorem1(problem: &BenchmarkProblem) -> Result<QuadraticProgram> {
    crate::bench_mean::ensure_valid(problem)?;
    let sizes: Vec<usize> = problem.bayes_estimates.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    let mut q = DMatrix::zeros(n, n);
    let mut row = DMatrix::zeros(1, n);
    let mut offset = 0;
    for (i, &ni) in sizes.iter().enumerate() {
        let w = &problem.constraint.unit_weights[i];
        let xi = &problem.loss.unit_loss[i];
        let phi = problem.loss.area_loss[i];
        let eta = problem.constraint.area_weights[i];
        for j in 0..ni {
            for k in 0..ni {
                q[(offset + j, offset + k)] = phi * w[j] * w[k];
            }
            q[(offset + j, offset + j)] += xi[j];
            row[(0, offset + j)] = eta * w[j];
        }
        offset += ni;
    }
    Ok(QuadraticProgram {
        q,
        center: DVector::from_iterator(n, problem.bayes_estimates.iter().flatten().copied()),
        constraints: row,
        rhs: DVector::from_element(1, problem.constraint.target),
    })
}

/// Stacked QP of a matrix-weighted benchmarking problem.
///
/// Variables are the unit vectors in area-major order; the objective block of
/// area `i` is `blockdiag(Lambda_ij) + W_i^T Psi_i W_i` with `W_i = [W_i1 .. W_in]`,
/// and the constraints are `sum_i Gamma_i W_i theta_i = p`.
pub fn encode_theorem3(problem: &MultiBenchmarkProblem) -> Result<QuadraticProgram> {
    problem.check_shapes()?;
    let dim = problem.dim;
    let total_units: usize = problem.bayes_estimates.iter().map(Vec::len).sum();
    let n = total_units * dim;
    let mut q = DMatrix::zeros(n, n);
    let mut cons = DMatrix::zeros(dim, n);
    let mut center = DVector::zeros(n);
    let mut offset = 0;
    for i in 0..problem.num_areas() {
        let ni = problem.bayes_estimates[i].len();
        let mut wi = DMatrix::zeros(dim, ni * dim);
        for j in 0..ni {
            wi.view_mut((0, j * dim), (dim, dim))
                .copy_from(&problem.unit_maps[i][j]);
            center
                .rows_mut(offset + j * dim, dim)
                .copy_from(&problem.bayes_estimates[i][j]);
        }
        let mut block = wi.transpose() * &problem.area_loss[i] * &wi;
        for j in 0..ni {
            let mut v = block.view_mut((j * dim, j * dim), (dim, dim));
            v += &problem.unit_loss[i][j];
        }
        q.view_mut((offset, offset), (ni * dim, ni * dim))
            .copy_from(&block);
        cons.view_mut((0, offset), (dim, ni * dim))
            .copy_from(&(&problem.area_maps[i] * &wi));
        offset += ni * dim;
    }
    Ok(QuadraticProgram {
        q,
        center,
        constraints: cons,
        rhs: problem.target.clone(),
    })
}

/// Splits a stacked solution back into per-area, per-unit values.
pub fn unstack(x: &DVector<f64>, sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &n in sizes {
        out.push(x.rows(offset, n).iter().copied().collect());
        offset += n;
    }
    out
}
