//! Invariant checks on benchmarking inputs.

use std::fmt;

use crate::tolerance;
use crate::types::BenchmarkProblem;

/// One broken invariant. Areas and units are numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub area: Option<usize>,
    pub unit: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Violation {
    fn global(message: String) -> Self {
        Self {
            area: None,
            unit: None,
            message,
        }
    }

    fn area(i: usize, message: String) -> Self {
        Self {
            area: Some(i + 1),
            unit: None,
            message,
        }
    }

    fn unit(i: usize, j: usize, message: String) -> Self {
        Self {
            area: Some(i + 1),
            unit: Some(j + 1),
            message,
        }
    }
}

/// Lists every violated invariant of `problem`; empty means well formed.
pub fn validate_problem(problem: &BenchmarkProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let c = &problem.constraint;
    let loss = &problem.loss;
    let m = problem.bayes_estimates.len();

    if m == 0 {
        out.push(Violation::global("problem has no areas".into()));
        return out;
    }
    for (what, len) in [
        ("unit weight vectors", c.unit_weights.len()),
        ("area weights", c.area_weights.len()),
        ("unit loss vectors", loss.unit_loss.len()),
        ("area loss weights", loss.area_loss.len()),
    ] {
        if len != m {
            out.push(Violation::global(format!(
                "{len} {what} for {m} areas of Bayes estimates"
            )));
        }
    }
    if !out.is_empty() {
        return out;
    }
    if !c.target.is_finite() {
        out.push(Violation::global(format!("target {} is not finite", c.target)));
    }

    for i in 0..m {
        let theta = &problem.bayes_estimates[i];
        let w = &c.unit_weights[i];
        let xi = &loss.unit_loss[i];
        let n = theta.len();
        if n == 0 {
            out.push(Violation::area(i, format!("area {} has no units", i + 1)));
            continue;
        }
        if w.len() != n || xi.len() != n {
            out.push(Violation::area(
                i,
                format!(
                    "area {}: {} Bayes estimates, {} unit weights, {} unit loss weights",
                    i + 1,
                    n,
                    w.len(),
                    xi.len()
                ),
            ));
            continue;
        }
        for j in 0..n {
            if !theta[j].is_finite() {
                out.push(Violation::unit(
                    i,
                    j,
                    format!("nonfinite Bayes estimate at area {} unit {}", i + 1, j + 1),
                ));
            }
            if !(w[j] >= 0.0 && w[j].is_finite()) {
                out.push(Violation::unit(
                    i,
                    j,
                    format!("invalid unit weight {} at area {} unit {}", w[j], i + 1, j + 1),
                ));
            }
            if !(xi[j] > 0.0 && xi[j].is_finite()) {
                out.push(Violation::unit(
                    i,
                    j,
                    format!(
                        "nonpositive loss weight {} at area {} unit {}",
                        xi[j],
                        i + 1,
                        j + 1
                    ),
                ));
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > tolerance::NORMALIZATION_EXACT {
            out.push(Violation::area(
                i,
                format!("unit weights of area {} sum to {}", i + 1, sum),
            ));
        }
        let eta = c.area_weights[i];
        if !(eta >= 0.0 && eta.is_finite()) {
            out.push(Violation::area(
                i,
                format!("invalid area weight {} for area {}", eta, i + 1),
            ));
        }
        let phi = loss.area_loss[i];
        if !phi.is_finite() {
            out.push(Violation::area(
                i,
                format!("nonfinite area loss weight for area {}", i + 1),
            ));
        } else if xi.iter().all(|x| *x > 0.0) {
            let s: f64 = w.iter().zip(xi).map(|(w, x)| w * w / x).sum();
            if !(1.0 + phi * s > 0.0) {
                out.push(Violation::area(
                    i,
                    format!(
                        "area {}: 1 + phi s = {} is not positive",
                        i + 1,
                        1.0 + phi * s
                    ),
                ));
            }
        }
    }
    let eta_sum: f64 = c.area_weights.iter().sum();
    if (eta_sum - 1.0).abs() > tolerance::NORMALIZATION_EXACT {
        out.push(Violation::global(format!("area weights sum to {eta_sum}")));
    }
    out
}
