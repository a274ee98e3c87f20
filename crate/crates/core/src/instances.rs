//! Random benchmarking instances for oracle comparisons and property checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bench_multi::MultiBenchmarkProblem;
use crate::error::Result;
use crate::posterior::PosteriorSummary;
use crate::types::{BenchmarkProblem, ConstraintWeights, LossWeights};
use crate::weights::{make_loss_weights, LossScheme};

/// How loss weights of a random instance are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossChoice {
    Scheme(LossScheme),
    /// Independent positive weights at both levels.
    RandomPositive,
}

impl LossChoice {
    pub const ALL: [LossChoice; 5] = [
        LossChoice::Scheme(LossScheme::Constant),
        LossChoice::Scheme(LossScheme::InverseVariance),
        LossChoice::Scheme(LossScheme::Raked { g: None }),
        LossChoice::Scheme(LossScheme::DomainWeighted),
        LossChoice::RandomPositive,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            LossChoice::Scheme(s) => s.tag(),
            LossChoice::RandomPositive => "random",
        }
    }
}

fn normalized(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random SPD matrix `A A^T + eps I` scaled by `scale`.
pub fn random_spd(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.2) * scale
}

/// A synthetic posterior: random probabilities as means and random SPD
/// covariance blocks of realistic magnitude.
pub fn random_posterior(
    rng: &mut impl Rng,
    sizes: &[usize],
    unit_weights: &[Vec<f64>],
) -> PosteriorSummary {
    let mean = sizes
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(0.05..0.6)).collect())
        .collect();
    let cov = sizes
        .iter()
        .map(|&n| {
            let scale = rng.random_range(0.001..0.01);
            random_spd(rng, n, scale)
        })
        .collect();
    PosteriorSummary::from_moments(mean, cov, unit_weights, 1000)
}

/// Random scalar benchmarking problem with `1..=max_areas` areas of
/// `1..=max_units` units. The Bayes estimates are the posterior means.
pub fn random_problem(
    rng: &mut impl Rng,
    max_areas: usize,
    max_units: usize,
    choice: LossChoice,
) -> Result<BenchmarkProblem> {
    let m = rng.random_range(1..=max_areas);
    let sizes: Vec<usize> = (0..m).map(|_| rng.random_range(1..=max_units)).collect();
    random_problem_with_sizes(rng, &sizes, choice)
}

pub fn random_problem_with_sizes(
    rng: &mut impl Rng,
    sizes: &[usize],
    choice: LossChoice,
) -> Result<BenchmarkProblem> {
    let unit_weights: Vec<Vec<f64>> = sizes.iter().map(|&n| normalized(rng, n)).collect();
    let area_weights = normalized(rng, sizes.len());
    let posterior = random_posterior(rng, sizes, &unit_weights);
    let bayes = posterior.mean_theta.clone();
    let constraint = ConstraintWeights {
        unit_weights,
        area_weights,
        target: rng.random_range(0.1..0.5),
    };
    let loss = match choice {
        LossChoice::Scheme(s) => make_loss_weights(s, &bayes, &constraint, Some(&posterior))?,
        LossChoice::RandomPositive => LossWeights {
            unit_loss: sizes
                .iter()
                .map(|&n| (0..n).map(|_| rng.random_range(0.1..10.0)).collect())
                .collect(),
            area_loss: (0..sizes.len()).map(|_| rng.random_range(0.0..10.0)).collect(),
        },
    };
    Ok(BenchmarkProblem {
        bayes_estimates: bayes,
        constraint,
        loss,
        posterior: Some(posterior),
    })
}

/// Random matrix-weighted problem. Unit maps are well-conditioned random
/// matrices scaled so they average to about the identity within an area.
pub fn random_multi_problem(
    rng: &mut impl Rng,
    dim: usize,
    max_areas: usize,
    max_units: usize,
) -> MultiBenchmarkProblem {
    let m = rng.random_range(1..=max_areas);
    let mut problem = MultiBenchmarkProblem {
        dim,
        bayes_estimates: Vec::with_capacity(m),
        unit_maps: Vec::with_capacity(m),
        area_maps: Vec::with_capacity(m),
        unit_loss: Vec::with_capacity(m),
        area_loss: Vec::with_capacity(m),
        target: DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)),
    };
    let near_identity = |rng: &mut dyn rand::RngCore, scale: f64| {
        let noise = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.3..0.3));
        (DMatrix::identity(dim, dim) + noise) * scale
    };
    for _ in 0..m {
        let n = rng.random_range(1..=max_units);
        problem
            .bayes_estimates
            .push((0..n).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))).collect());
        problem
            .unit_maps
            .push((0..n).map(|_| near_identity(rng, 1.0 / n as f64)).collect());
        problem
            .unit_loss
            .push((0..n).map(|_| {
                let scale = rng.random_range(0.5..5.0);
                random_spd(rng, dim, scale)
            }).collect());
        problem.area_maps.push(near_identity(rng, 1.0 / m as f64));
        let scale = rng.random_range(0.1..5.0);
        problem.area_loss.push(random_spd(rng, dim, scale));
    }
    problem
}

/// Scalar problem recast as a one-dimensional matrix-weighted problem.
pub fn as_multi(problem: &BenchmarkProblem) -> MultiBenchmarkProblem {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let c = &problem.constraint;
    MultiBenchmarkProblem {
        dim: 1,
        bayes_estimates: problem
            .bayes_estimates
            .iter()
            .map(|a| a.iter().map(|&t| DVector::from_element(1, t)).collect())
            .collect(),
        unit_maps: c
            .unit_weights
            .iter()
            .map(|a| a.iter().map(|&w| one(w)).collect())
            .collect(),
        area_maps: c.area_weights.iter().map(|&e| one(e)).collect(),
        unit_loss: problem
            .loss
            .unit_loss
            .iter()
            .map(|a| a.iter().map(|&x| one(x)).collect())
            .collect(),
        area_loss: problem.loss.area_loss.iter().map(|&p| one(p)).collect(),
        target: DVector::from_element(1, c.target),
    }
}
