use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::rejection::{sample_theta_rejection, RejectionStats};
use super::{BetaPrior, GibbsState, HBModelSpec, InverseGamma, McmcConfig};
use crate::error::{BenchError, Result};

/// A state kept after burn-in and thinning, with its 1-based sweep number.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedDraw {
    pub iteration: usize,
    pub state: GibbsState,
}

/// Parameters of the Gaussian and Inverse-Gamma full conditionals.
pub struct Conditionals;

impl Conditionals {
    /// `(mean, covariance)` of `beta | theta, u, sigma2_e`.
    pub fn beta(sampler: &GibbsSampler, state: &GibbsState) -> (DVector<f64>, DMatrix<f64>) {
        let (mean, factor) = sampler.beta_conditional(state);
        let cov = factor.inverse();
        (mean, cov)
    }

    /// Per-area `(mean, variance)` of `u | theta, beta, sigma2_e, sigma2_u`.
    pub fn u(
        spec: &HBModelSpec,
        theta: &DVector<f64>,
        beta: &DVector<f64>,
        sigma2_e: f64,
        sigma2_u: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let design = &spec.design;
        let resid = theta - design.x() * beta;
        let sums = design.area_sums(&resid);
        let var = DVector::from_iterator(
            design.num_areas(),
            design
                .area_sizes()
                .iter()
                .map(|&n| 1.0 / (n as f64 / sigma2_e + 1.0 / sigma2_u)),
        );
        let mean = sums.component_mul(&var) / sigma2_e;
        (mean, var)
    }

    /// `sigma2_e | theta, beta, u ~ IG(scale (a + |theta - X beta - Z u|^2)/2, shape (b + N)/2)`.
    pub fn sigma2_e(
        spec: &HBModelSpec,
        theta: &DVector<f64>,
        beta: &DVector<f64>,
        u: &DVector<f64>,
    ) -> InverseGamma {
        let design = &spec.design;
        let resid = theta - design.x() * beta - design.expand_areas(u);
        InverseGamma::new(
            0.5 * (spec.hyper.a + resid.norm_squared()),
            0.5 * (spec.hyper.b + design.num_units() as f64),
        )
    }

    /// `sigma2_u | u ~ IG(scale (c + u^T u)/2, shape (d + m)/2)`.
    pub fn sigma2_u(spec: &HBModelSpec, u: &DVector<f64>) -> InverseGamma {
        InverseGamma::new(
            0.5 * (spec.hyper.c + u.norm_squared()),
            0.5 * (spec.hyper.d + u.len() as f64),
        )
    }
}

/// Gibbs sampler with the design cross-products precomputed.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    spec: HBModelSpec,
    xtx: DMatrix<f64>,
    xtx_chol: Cholesky<f64, Dyn>,
    stats: RejectionStats,
}

impl GibbsSampler {
    pub fn new(spec: HBModelSpec) -> Result<Self> {
        spec.validate()?;
        let x = spec.design.x();
        let xtx = x.transpose() * x;
        let xtx_chol = xtx
            .clone()
            .cholesky()
            .ok_or_else(|| BenchError::InvalidInput("X^T X is not positive definite".into()))?;
        Ok(Self {
            spec,
            xtx,
            xtx_chol,
            stats: RejectionStats::default(),
        })
    }

    pub fn spec(&self) -> &HBModelSpec {
        &self.spec
    }

    /// Replaces the observed responses, keeping the design.
    pub fn set_responses(&mut self, responses: Vec<bool>) -> Result<()> {
        if responses.len() != self.spec.design.num_units() {
            return Err(BenchError::InvalidInput(format!(
                "{} responses for {} units",
                responses.len(),
                self.spec.design.num_units()
            )));
        }
        self.spec.responses = responses;
        Ok(())
    }

    /// Proposal/acceptance counts of the embedded rejection sampler so far.
    pub fn rejection_stats(&self) -> RejectionStats {
        self.stats
    }

    /// Conditional mean of beta and the Cholesky factor of its precision.
    fn beta_conditional(&self, state: &GibbsState) -> (DVector<f64>, Cholesky<f64, Dyn>) {
        let design = &self.spec.design;
        let resid = &state.theta - design.expand_areas(&state.u);
        let xtr = design.x().transpose() * resid;
        match &self.spec.beta_prior {
            BetaPrior::Flat => {
                let mean = self.xtx_chol.solve(&xtr);
                let precision = (&self.xtx / state.sigma2_e)
                    .cholesky()
                    .expect("scaled positive definite matrix");
                (mean, precision)
            }
            BetaPrior::Gaussian { precision } => {
                let prec = &self.xtx / state.sigma2_e + DMatrix::from_diagonal(precision);
                let chol = prec.cholesky().expect("sum of positive definite matrices");
                let mean = chol.solve(&(xtr / state.sigma2_e));
                (mean, chol)
            }
        }
    }

    /// One full sweep: beta, u, sigma2_e, sigma2_u, then every theta_ij.
    ///
    /// `iteration` only labels divergence errors.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &GibbsState,
        rng: &mut R,
        iteration: usize,
    ) -> Result<GibbsState> {
        let spec = &self.spec;
        let design = &spec.design;
        let diverged = |what: &str| BenchError::SamplerDivergence {
            iteration,
            detail: format!("nonfinite {what}"),
        };

        // beta ~ N(mean, P^{-1}) with P = L L^T: mean + L^{-T} z.
        let (mean, prec) = self.beta_conditional(state);
        let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let l_t = prec.l().transpose();
        let offset = l_t
            .solve_upper_triangular(&z)
            .ok_or_else(|| diverged("beta precision factor"))?;
        let beta = mean + offset;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(diverged("beta"));
        }

        let (u_mean, u_var) =
            Conditionals::u(spec, &state.theta, &beta, state.sigma2_e, state.sigma2_u);
        let u = DVector::from_fn(u_mean.len(), |i, _| {
            u_mean[i] + u_var[i].sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        if u.iter().any(|v| !v.is_finite()) {
            return Err(diverged("u"));
        }

        let sigma2_e = Conditionals::sigma2_e(spec, &state.theta, &beta, &u).sample(rng);
        let sigma2_u = Conditionals::sigma2_u(spec, &u).sample(rng);
        if !(sigma2_e > 0.0 && sigma2_e.is_finite()) {
            return Err(diverged("sigma2_e"));
        }
        if !(sigma2_u > 0.0 && sigma2_u.is_finite()) {
            return Err(diverged("sigma2_u"));
        }

        let mu = design.x() * &beta + design.expand_areas(&u);
        let mut theta = DVector::zeros(design.num_units());
        for k in 0..design.num_units() {
            theta[k] = sample_theta_rejection(
                spec.responses[k],
                mu[k],
                sigma2_e,
                rng,
                Some(&mut self.stats),
            )
            .map_err(|e| match e {
                BenchError::SamplerDivergence { detail, .. } => {
                    BenchError::SamplerDivergence { iteration, detail }
                }
                other => other,
            })?;
        }
        Ok(GibbsState {
            beta,
            u,
            theta,
            sigma2_e,
            sigma2_u,
        })
    }
}

/// One sweep from `state`. Builds a fresh sampler; use [`GibbsSampler`] to
/// run many sweeps.
pub fn gibbs_step<R: Rng + ?Sized>(
    state: &GibbsState,
    spec: &HBModelSpec,
    rng: &mut R,
) -> Result<GibbsState> {
    GibbsSampler::new(spec.clone())?.step(state, rng, 0)
}

/// Starting point of chain `chain`.
///
/// Logits are initialized at the empirical logits of `(y + 0.5) / 2`, beta at
/// their least-squares fit, `u` at zero and the variances at the residual
/// spreads of that fit (floored at 0.1). Chains after the first perturb beta
/// with standard normal noise and double the starting variances per chain.
pub fn initial_state<R: Rng + ?Sized>(spec: &HBModelSpec, chain: usize, rng: &mut R) -> GibbsState {
    let design = &spec.design;
    let theta = DVector::from_iterator(
        design.num_units(),
        spec.responses
            .iter()
            .map(|&y| super::logit((f64::from(u8::from(y)) + 0.5) / 2.0)),
    );
    let x = design.x();
    let xtx = x.transpose() * x;
    let mut beta = xtx
        .cholesky()
        .expect("design has full column rank")
        .solve(&(x.transpose() * &theta));
    let resid = &theta - x * &beta;
    let n = design.num_units() as f64;
    let sigma2_e = (resid.norm_squared() / n).max(0.1);
    let area_means = design
        .area_sums(&resid)
        .iter()
        .zip(design.area_sizes())
        .map(|(s, &k)| s / k as f64)
        .collect::<Vec<_>>();
    let sigma2_u = (area_means.iter().map(|v| v * v).sum::<f64>() / area_means.len() as f64).max(0.1);
    let spread = 2f64.powi(chain as i32);
    if chain > 0 {
        for b in beta.iter_mut() {
            *b += rng.sample::<f64, _>(StandardNormal);
        }
    }
    GibbsState {
        beta,
        u: DVector::zeros(design.num_areas()),
        theta,
        sigma2_e: sigma2_e * spread,
        sigma2_u: sigma2_u * spread,
    }
}

/// Generator for chain `chain` under `seed`: one ChaCha stream per chain.
pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs chain number `chain` and returns its retained draws.
pub fn run_chain(spec: &HBModelSpec, config: &McmcConfig, chain: usize) -> Result<Vec<RetainedDraw>> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let mut sampler = GibbsSampler::new(spec.clone())?;
    let mut state = initial_state(spec, chain, &mut rng);
    let mut kept = Vec::with_capacity(config.retained());
    for iteration in 1..=config.iterations {
        state = sampler.step(&state, &mut rng, iteration)?;
        if iteration > config.burn_in && (iteration - config.burn_in) % config.thin == 0 {
            kept.push(RetainedDraw {
                iteration,
                state: state.clone(),
            });
        }
    }
    log::debug!(
        "chain {chain}: rejection acceptance rate {:.3}",
        sampler.rejection_stats().acceptance_rate()
    );
    Ok(kept)
}

/// Runs `config.chains` independent chains on separate threads.
pub fn run_chains(spec: &HBModelSpec, config: &McmcConfig) -> Result<Vec<Vec<RetainedDraw>>> {
    config.validate()?;
    let p = spec.design.num_coefficients();
    if spec.beta_prior == BetaPrior::Flat && !spec.hyper.proper_with_flat_beta(p) {
        log::warn!(
            "b + d = {} does not exceed the {p} regression coefficients: the posterior is improper \
             and the chains will drift",
            spec.hyper.b + spec.hyper.d
        );
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| scope.spawn(move || run_chain(spec, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hb_model::{Design, Hyperparameters};

    fn tiny_spec() -> HBModelSpec {
        let x = DMatrix::from_element(2, 1, 1.0);
        HBModelSpec::new(
            Hyperparameters::default(),
            Design::new(x, vec![1, 1]).unwrap(),
            vec![true, false],
        )
        .unwrap()
    }

    #[test]
    fn beta_conditional_intercept_only() {
        let spec = tiny_spec();
        let sampler = GibbsSampler::new(spec).unwrap();
        let state = GibbsState {
            beta: DVector::from_element(1, 0.0),
            u: DVector::from_vec(vec![0.5, -1.0]),
            theta: DVector::from_vec(vec![2.5, 3.0]),
            sigma2_e: 0.7,
            sigma2_u: 1.0,
        };
        // theta - Z u = (2, 4)
        let (mean, cov) = Conditionals::beta(&sampler, &state);
        assert!((mean[0] - 3.0).abs() < 1e-12);
        assert!((cov[(0, 0)] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn beta_conditional_recovers_exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 1.0, -1.2, 1.0, 2.0, 1.0, 0.1]);
        let spec = HBModelSpec::new(
            Hyperparameters::default(),
            Design::new(x.clone(), vec![2, 2]).unwrap(),
            vec![true, false, true, true],
        )
        .unwrap();
        let beta0 = DVector::from_vec(vec![-0.4, 1.1]);
        let u0 = DVector::from_vec(vec![0.2, -0.3]);
        let theta = &x * &beta0 + spec.design.expand_areas(&u0);
        let sampler = GibbsSampler::new(spec).unwrap();
        let state = GibbsState {
            beta: DVector::zeros(2),
            u: u0,
            theta,
            sigma2_e: 1.3,
            sigma2_u: 0.4,
        };
        let (mean, _) = Conditionals::beta(&sampler, &state);
        assert!((mean - beta0).amax() < 1e-12);
    }

    #[test]
    fn u_conditional_large_area_limit() {
        let n = 100_000;
        let x = DMatrix::from_element(n, 1, 1.0);
        let spec = HBModelSpec::new(
            Hyperparameters::default(),
            Design::new(x, vec![n]).unwrap(),
            vec![false; n],
        )
        .unwrap();
        let theta = DVector::from_element(n, 0.7);
        let (_, var) = Conditionals::u(&spec, &theta, &DVector::zeros(1), 2.0, 0.5);
        let limit = 2.0 / n as f64;
        assert!((var[0] - limit).abs() / limit < 1e-4);
    }

    #[test]
    fn variance_conditionals() {
        let spec = tiny_spec();
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let beta = DVector::from_element(1, 0.5);
        let u = DVector::from_vec(vec![0.25, -0.5]);
        // residuals (0.25, 2.0)
        let ig = Conditionals::sigma2_e(&spec, &theta, &beta, &u);
        assert!((ig.scale - 0.5 * (2.0 + 0.0625 + 4.0)).abs() < 1e-12);
        assert!((ig.shape - 0.5 * (6.0 + 2.0)).abs() < 1e-12);
        let ig = Conditionals::sigma2_u(&spec, &u);
        assert!((ig.scale - 0.5 * (2.0 + 0.3125)).abs() < 1e-12);
        assert!((ig.shape - 0.5 * (6.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn chain_is_deterministic_and_thinned() {
        let spec = tiny_spec();
        let config = McmcConfig {
            iterations: 1000,
            burn_in: 200,
            thin: 8,
            seed: 11,
            chains: 2,
        };
        let a = run_chains(&spec, &config).unwrap();
        let b = run_chains(&spec, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 100);
        assert_eq!(a[0][0].iteration, 208);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().flatten().all(|d| d.state.is_valid()));
    }
}
