//! Self-checks of the sampler against independent simulators.
//!
//! - [`geweke_test`] compares moments of the joint distribution of parameters
//!   and data obtained by direct simulation from the prior (marginal-conditional)
//!   with those obtained by alternating data draws and Gibbs sweeps
//!   (successive-conditional). A correct sampler makes both agree.
//! - [`rejection_ks`] compares draws of the unit-logit sampler with the
//!   target distribution function obtained by numerical quadrature.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::diagnostics::ParamName;
use super::gibbs::GibbsSampler;
use super::rejection::{acceptance_probability, expit, sample_theta_rejection};
use super::{BetaPrior, GibbsState, HBModelSpec};
use crate::error::{BenchError, Result};

/// Draws parameters from the (proper) prior and then data given parameters.
pub fn draw_from_prior<R: Rng + ?Sized>(spec: &HBModelSpec, rng: &mut R) -> Result<(GibbsState, Vec<bool>)> {
    let BetaPrior::Gaussian { precision } = &spec.beta_prior else {
        return Err(BenchError::UnsupportedConfiguration(
            "prior simulation needs a Gaussian prior on beta".into(),
        ));
    };
    let design = &spec.design;
    let beta = DVector::from_fn(precision.len(), |k, _| {
        rng.sample::<f64, _>(StandardNormal) / precision[k].sqrt()
    });
    let sigma2_e = spec.hyper.sigma2_e_prior().sample(rng);
    let sigma2_u = spec.hyper.sigma2_u_prior().sample(rng);
    let u = DVector::from_fn(design.num_areas(), |_, _| {
        sigma2_u.sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let mu = design.x() * &beta + design.expand_areas(&u);
    let theta = mu.map(|m| m + sigma2_e.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let y = draw_responses(&theta, rng);
    Ok((
        GibbsState {
            beta,
            u,
            theta,
            sigma2_e,
            sigma2_u,
        },
        y,
    ))
}

fn draw_responses<R: Rng + ?Sized>(theta: &DVector<f64>, rng: &mut R) -> Vec<bool> {
    theta.iter().map(|&t| rng.random::<f64>() < expit(t)).collect()
}

/// Scalar summaries compared by the joint-distribution test: every parameter
/// and its square.
fn test_functions(state: &GibbsState, names: &[ParamName]) -> Vec<f64> {
    names
        .iter()
        .flat_map(|n| {
            let v = n.value(state).expect("monitored parameter in range");
            [v, v * v]
        })
        .collect()
}

fn monitored(spec: &HBModelSpec) -> Vec<ParamName> {
    let d = &spec.design;
    let mut names = ParamName::global(d.num_coefficients(), d.num_areas());
    names.extend((0..d.num_units()).map(ParamName::Theta));
    names
}

/// One compared moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentComparison {
    /// Parameter name, with `^2` appended for second moments.
    pub label: String,
    pub marginal_mean: f64,
    pub marginal_se: f64,
    pub successive_mean: f64,
    pub successive_se: f64,
}

impl MomentComparison {
    pub fn z_score(&self) -> f64 {
        (self.marginal_mean - self.successive_mean)
            / (self.marginal_se.powi(2) + self.successive_se.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub marginal_draws: usize,
    pub successive_draws: usize,
    pub moments: Vec<MomentComparison>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.moments.iter().map(|m| m.z_score().abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self, threshold: f64) -> bool {
        self.moments.iter().all(|m| m.z_score().abs() <= threshold)
    }
}

/// Number of batches used for the successive-conditional standard errors.
const BATCHES: usize = 100;

/// Runs both simulators. `spec.responses` only fixes the data dimension; the
/// beta prior must be Gaussian and both variance priors need shape above 2
/// for the second moments to have finite variance.
pub fn geweke_test(
    spec: &HBModelSpec,
    marginal_draws: usize,
    successive_draws: usize,
    seed: u64,
) -> Result<GewekeReport> {
    if marginal_draws < 2 || successive_draws < BATCHES {
        return Err(BenchError::InsufficientSample {
            needed: BATCHES,
            got: successive_draws.min(marginal_draws),
        });
    }
    let names = monitored(spec);
    let width = 2 * names.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    for _ in 0..marginal_draws {
        let (state, _) = draw_from_prior(spec, &mut rng)?;
        for (k, g) in test_functions(&state, &names).into_iter().enumerate() {
            sum[k] += g;
            sum_sq[k] += g * g;
        }
    }
    let r = marginal_draws as f64;
    let mc_mean: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let mc_se: Vec<f64> = (0..width)
        .map(|k| ((sum_sq[k] / r - mc_mean[k].powi(2)).max(0.0) / (r - 1.0)).sqrt())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (mut state, y) = draw_from_prior(spec, &mut rng)?;
    let mut sampler = GibbsSampler::new(HBModelSpec {
        responses: y,
        ..spec.clone()
    })?;
    let batch_len = successive_draws / BATCHES;
    let mut batch_means = vec![vec![0.0; width]; BATCHES];
    for (b, batch) in batch_means.iter_mut().enumerate() {
        for t in 0..batch_len {
            state = sampler.step(&state, &mut rng, b * batch_len + t + 1)?;
            for (k, g) in test_functions(&state, &names).into_iter().enumerate() {
                batch[k] += g;
            }
            sampler.set_responses(draw_responses(&state.theta, &mut rng))?;
        }
        batch.iter_mut().for_each(|v| *v /= batch_len as f64);
    }
    let nb = BATCHES as f64;
    let sc_mean: Vec<f64> = (0..width)
        .map(|k| batch_means.iter().map(|b| b[k]).sum::<f64>() / nb)
        .collect();
    let sc_se: Vec<f64> = (0..width)
        .map(|k| {
            let var = batch_means.iter().map(|b| (b[k] - sc_mean[k]).powi(2)).sum::<f64>() / (nb - 1.0);
            (var / nb).sqrt()
        })
        .collect();

    let moments = names
        .iter()
        .flat_map(|n| [n.to_string(), format!("{n}^2")])
        .enumerate()
        .map(|(k, label)| MomentComparison {
            label,
            marginal_mean: mc_mean[k],
            marginal_se: mc_se[k],
            successive_mean: sc_mean[k],
            successive_se: sc_se[k],
        })
        .collect();
    Ok(GewekeReport {
        marginal_draws,
        successive_draws: batch_len * BATCHES,
        moments,
    })
}

/// Distribution function of the unit-logit conditional on a uniform grid,
/// from the composite trapezoid rule over `mu +- 12 sd`.
pub fn target_cdf(y: bool, mu: f64, sigma2_e: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let sd = sigma2_e.sqrt();
    let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let h = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| lo + k as f64 * h).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&t| acceptance_probability(y, t) * (-(t - mu).powi(2) / (2.0 * sigma2_e)).exp())
        .collect();
    let mut cdf = vec![0.0; points];
    for k in 1..points {
        cdf[k] = cdf[k - 1] + 0.5 * h * (density[k - 1] + density[k]);
    }
    let total = cdf[points - 1];
    cdf.iter_mut().for_each(|c| *c /= total);
    (grid, cdf)
}

fn interpolate(grid: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return 0.0;
    }
    if x >= grid[grid.len() - 1] {
        return 1.0;
    }
    let h = grid[1] - grid[0];
    let k = (((x - grid[0]) / h) as usize).min(grid.len() - 2);
    let frac = (x - grid[k]) / h;
    cdf[k] + frac * (cdf[k + 1] - cdf[k])
}

/// Kolmogorov-Smirnov distance of `draws` from the distribution function
/// tabulated on `grid`.
pub fn ks_distance(draws: &mut [f64], grid: &[f64], cdf: &[f64]) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = interpolate(grid, cdf, x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub y: bool,
    pub mu: f64,
    pub sigma2_e: f64,
    pub draws: usize,
    pub statistic: f64,
    pub critical: f64,
}

impl KsOutcome {
    pub fn passed(&self) -> bool {
        self.statistic < self.critical
    }
}

/// Draws `n` values from the rejection sampler and measures their KS distance
/// from the quadrature distribution function.
pub fn rejection_ks(y: bool, mu: f64, sigma2_e: f64, n: usize, seed: u64) -> Result<KsOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = (0..n)
        .map(|_| sample_theta_rejection(y, mu, sigma2_e, &mut rng, None))
        .collect::<Result<Vec<f64>>>()?;
    let (grid, cdf) = target_cdf(y, mu, sigma2_e, 200_001);
    Ok(KsOutcome {
        y,
        mu,
        sigma2_e,
        draws: n,
        statistic: ks_distance(&mut draws, &grid, &cdf),
        critical: ks_critical_1pct(n),
    })
}
