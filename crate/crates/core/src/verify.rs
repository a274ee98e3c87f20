//! Randomized comparison of the closed-form estimators against the KKT oracle.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench_mean::benchmark_mean;
use crate::bench_multi::benchmark_mean_multi;
use crate::error::Result;
use crate::instances::{as_multi, random_multi_problem, random_problem, LossChoice};
use crate::oracle::{encode_theorem1, encode_theorem3, solve_kkt, unstack};
use crate::tolerance;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    pub max_areas: usize,
    pub max_units: usize,
    /// Added to the first closed-form unit estimate of every instance. Only
    /// used to check that the comparison can fail.
    pub fault: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 0,
            max_areas: 5,
            max_units: 6,
            fault: 0.0,
        }
    }
}

/// Largest deviations over all instances, and a dump of the worst offender.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub instances: usize,
    /// Scalar closed form vs oracle.
    pub scalar_deviation: f64,
    /// Matrix-weighted closed form vs oracle.
    pub multi_deviation: f64,
    /// One-dimensional matrix-weighted form vs the scalar closed form.
    pub reduction_deviation: f64,
    /// Largest constraint residual of any closed-form solution.
    pub constraint_residual: f64,
    /// Instances whose checks failed, as `Debug` dumps for reproduction.
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_deviation(&self) -> f64 {
        self.scalar_deviation
            .max(self.multi_deviation)
            .max(self.reduction_deviation)
    }
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Instance `k` uses stream `k` of `seed`, loss choice `k mod 5` and vector
/// dimension `1 + k mod 3`.
pub fn run_verification(options: &VerifyOptions) -> Result<VerificationReport> {
    let mut report = VerificationReport {
        instances: options.instances,
        scalar_deviation: 0.0,
        multi_deviation: 0.0,
        reduction_deviation: 0.0,
        constraint_residual: 0.0,
        failures: Vec::new(),
    };
    for k in 0..options.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(k as u64);
        let choice = LossChoice::ALL[k % LossChoice::ALL.len()];
        let problem = random_problem(&mut rng, options.max_areas, options.max_units, choice)?;
        let mut closed = benchmark_mean(&problem)?;
        closed.unit_estimates[0][0] += options.fault;
        let qp = encode_theorem1(&problem)?;
        let sizes: Vec<usize> = problem.bayes_estimates.iter().map(Vec::len).collect();
        let oracle_units = unstack(&solve_kkt(&qp)?, &sizes);
        let oracle_areas = problem.constraint.area_means(&oracle_units);
        let scalar_dev = max_abs_diff(
            closed.unit_estimates.iter().flatten(),
            oracle_units.iter().flatten(),
        )
        .max(max_abs_diff(&closed.area_estimates, &oracle_areas));
        let scalar_res = closed.residuals(&problem.constraint).max();

        let reduced = benchmark_mean_multi(&as_multi(&problem))?;
        let reduction_dev = max_abs_diff(
            closed.unit_estimates.iter().flatten(),
            reduced.unit_estimates.iter().flatten().map(|v| &v[0]),
        )
        .max(max_abs_diff(
            &closed.area_estimates,
            reduced.area_estimates.iter().map(|v| &v[0]),
        ));

        let dim = 1 + k % 3;
        let multi = random_multi_problem(&mut rng, dim, options.max_areas, options.max_units);
        let mut multi_closed = benchmark_mean_multi(&multi)?;
        multi_closed.unit_estimates[0][0][0] += options.fault;
        let x = solve_kkt(&encode_theorem3(&multi)?)?;
        let stacked: Vec<f64> = multi_closed
            .unit_estimates
            .iter()
            .flatten()
            .flat_map(|v| v.iter().copied())
            .collect();
        let multi_dev = (DVector::from_vec(stacked) - x).amax();
        let (r1, r2) = multi_closed.residuals(&multi);

        report.scalar_deviation = report.scalar_deviation.max(scalar_dev);
        report.reduction_deviation = report.reduction_deviation.max(reduction_dev);
        report.multi_deviation = report.multi_deviation.max(multi_dev);
        let fault_free_res = if options.fault == 0.0 {
            scalar_res.max(r1).max(r2)
        } else {
            0.0
        };
        report.constraint_residual = report.constraint_residual.max(fault_free_res);

        if scalar_dev > tolerance::ORACLE
            || reduction_dev > tolerance::ORACLE
            || fault_free_res > tolerance::CONSTRAINT
        {
            report.failures.push(format!(
                "instance {k} (scalar, loss {}): oracle deviation {scalar_dev:e}, \
                 reduction deviation {reduction_dev:e}, residual {scalar_res:e}\n{problem:?}",
                choice.tag()
            ));
        }
        if multi_dev > tolerance::ORACLE || r1.max(r2) > tolerance::CONSTRAINT {
            report.failures.push(format!(
                "instance {k} (dim {dim}): oracle deviation {multi_dev:e}, residuals {r1:e} {r2:e}\n{multi:?}"
            ));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let r = run_verification(&VerifyOptions {
            instances: 20,
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.max_deviation() <= tolerance::ORACLE);
    }

    #[test]
    fn fault_is_detected() {
        let r = run_verification(&VerifyOptions {
            instances: 3,
            fault: 1e-6,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.passed());
        assert!(r.scalar_deviation >= 0.9e-6);
    }
}
