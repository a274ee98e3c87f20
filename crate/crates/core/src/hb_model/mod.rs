//! Hierarchical logistic-normal model and its Gibbs sampler.
//!
//! ```text
//! y_ij | theta_ij    ~ Bernoulli(expit(theta_ij))
//! theta_ij | u_i     ~ N(x_ij^T beta + u_i, sigma2_e)
//! u_i | sigma2_u     ~ N(0, sigma2_u)
//! beta               ~ flat (optionally Gaussian)
//! sigma2_e           ~ InverseGamma(scale a/2, shape b/2)
//! sigma2_u           ~ InverseGamma(scale c/2, shape d/2)
//! ```
//!
//! Inverse-Gamma parameters are always given as `(scale, shape)`, with density
//! proportional to `x^-(shape+1) exp(-scale/x)`.

mod diagnostics;
mod draws;
mod gibbs;
mod rejection;
mod summary;
pub mod validation;

pub use diagnostics::{
    autocorrelation, effective_sample_size, mcmc_diagnostics, scale_reduction, DiagnosticReport,
    ParamDiagnostics, ParamName,
};
pub use draws::{read_draws, write_draws, DrawRecord};
pub use gibbs::{
    gibbs_step, initial_state, run_chain, run_chains, Conditionals, GibbsSampler, RetainedDraw,
};
pub use rejection::{acceptance_probability, expit, logit, sample_theta_rejection, RejectionStats};
pub use summary::{summarize_posterior, SummaryScale};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{BenchError, Result};
use crate::types::SurveyDataset;

/// Inverse-Gamma prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for Hyperparameters {
    /// Scale 1 and shape 3 for both variances.
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 6.0,
            c: 2.0,
            d: 6.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BenchError::InvalidInput(format!(
                    "hyperparameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the posterior is proper under a flat prior on `p` coefficients.
    ///
    /// With binary data the likelihood stays bounded away from zero along the
    /// ray where `beta`, `u` and both standard deviations grow together, and
    /// the posterior decays there like `s^(p - b - d - 1)` in `s = sigma_e`.
    /// It is integrable iff `b + d > p`; finite posterior means of the
    /// variances need `b + d > p + 2`.
    pub fn proper_with_flat_beta(&self, p: usize) -> bool {
        self.b + self.d > p as f64
    }

    pub fn sigma2_e_prior(&self) -> InverseGamma {
        InverseGamma::new(self.a / 2.0, self.b / 2.0)
    }

    pub fn sigma2_u_prior(&self) -> InverseGamma {
        InverseGamma::new(self.c / 2.0, self.d / 2.0)
    }
}

/// Inverse-Gamma distribution in the (scale, shape) parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGamma {
    pub scale: f64,
    pub shape: f64,
}

impl InverseGamma {
    pub fn new(scale: f64, shape: f64) -> Self {
        Self { scale, shape }
    }

    /// Defined for `shape > 1`.
    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0).expect("positive shape");
        self.scale / g.sample(rng)
    }
}

/// Prior on the regression coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaPrior {
    /// Uniform over the whole space (improper).
    Flat,
    /// `N(0, diag(1/precision))`.
    Gaussian { precision: DVector<f64> },
}

/// Covariate matrix and area membership, units stacked area by area.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    x: DMatrix<f64>,
    area_sizes: Vec<usize>,
    area_of_unit: Vec<usize>,
}

impl Design {
    pub fn new(x: DMatrix<f64>, area_sizes: Vec<usize>) -> Result<Self> {
        if area_sizes.is_empty() || area_sizes.contains(&0) {
            return Err(BenchError::InvalidInput(
                "every area needs at least one unit".into(),
            ));
        }
        let n: usize = area_sizes.iter().sum();
        if x.nrows() != n {
            return Err(BenchError::InvalidInput(format!(
                "design has {} rows for {n} units",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(BenchError::InvalidInput("design has no columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::InvalidInput("design has nonfinite entries".into()));
        }
        let xtx = x.transpose() * &x;
        let sv = xtx.singular_values();
        if !(sv.max() > 0.0 && sv.min() / sv.max() > 1e-12) {
            return Err(BenchError::InvalidInput(
                "design matrix is not of full column rank".into(),
            ));
        }
        let area_of_unit = area_sizes
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(i, n))
            .collect();
        Ok(Self {
            x,
            area_sizes,
            area_of_unit,
        })
    }

    /// Stacks the dataset covariates, optionally prefixed by an intercept column.
    pub fn from_dataset(data: &SurveyDataset, intercept: bool) -> Result<Self> {
        let p = data.num_covariates() + usize::from(intercept);
        let rows: Vec<f64> = data
            .units()
            .flat_map(|u| {
                let lead = intercept.then_some(1.0);
                lead.into_iter().chain(u.covariates.iter().copied())
            })
            .collect();
        let x = DMatrix::from_row_slice(data.num_units(), p, &rows);
        Self::new(x, data.area_sizes())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn area_sizes(&self) -> &[usize] {
        &self.area_sizes
    }

    pub fn area_of_unit(&self) -> &[usize] {
        &self.area_of_unit
    }

    pub fn num_units(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_areas(&self) -> usize {
        self.area_sizes.len()
    }

    pub fn num_coefficients(&self) -> usize {
        self.x.ncols()
    }

    /// `Z u`: each unit gets its area's effect.
    pub fn expand_areas(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.num_units(), self.area_of_unit.iter().map(|&i| u[i]))
    }

    /// `Z^T v`: per-area sums.
    pub fn area_sums(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_areas());
        for (k, &i) in self.area_of_unit.iter().enumerate() {
            out[i] += v[k];
        }
        out
    }
}

/// Model hyperparameters, design and observed responses.
#[derive(Debug, Clone, PartialEq)]
pub struct HBModelSpec {
    pub hyper: Hyperparameters,
    pub design: Design,
    pub responses: Vec<bool>,
    pub beta_prior: BetaPrior,
}

impl HBModelSpec {
    pub fn new(hyper: Hyperparameters, design: Design, responses: Vec<bool>) -> Result<Self> {
        let spec = Self {
            hyper,
            design,
            responses,
            beta_prior: BetaPrior::Flat,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Model for a survey dataset, with an intercept column added.
    pub fn from_dataset(data: &SurveyDataset, hyper: Hyperparameters) -> Result<Self> {
        Self::new(hyper, Design::from_dataset(data, true)?, data.responses())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.responses.len() != self.design.num_units() {
            return Err(BenchError::InvalidInput(format!(
                "{} responses for {} units",
                self.responses.len(),
                self.design.num_units()
            )));
        }
        if let BetaPrior::Gaussian { precision } = &self.beta_prior {
            if precision.len() != self.design.num_coefficients()
                || precision.iter().any(|p| !(*p > 0.0 && p.is_finite()))
            {
                return Err(BenchError::InvalidInput(
                    "Gaussian beta prior needs one positive precision per coefficient".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Current value of every latent quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    /// Unit logits, stacked area by area.
    pub theta: DVector<f64>,
    pub sigma2_e: f64,
    pub sigma2_u: f64,
}

impl GibbsState {
    pub fn is_valid(&self) -> bool {
        self.sigma2_e > 0.0
            && self.sigma2_u > 0.0
            && self.sigma2_e.is_finite()
            && self.sigma2_u.is_finite()
            && self.beta.iter().chain(self.u.iter()).chain(self.theta.iter()).all(|v| v.is_finite())
    }
}

/// Chain length, burn-in, thinning and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
}

impl Default for McmcConfig {
    /// Long-run settings: 200,000 sweeps, 2,000 burn-in, every 200th kept.
    fn default() -> Self {
        Self {
            iterations: 200_000,
            burn_in: 2_000,
            thin: 200,
            seed: 0,
            chains: 2,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.chains == 0 {
            return Err(BenchError::InvalidInput(
                "iterations, thin and chains must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(BenchError::InvalidInput(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin > self.iterations - self.burn_in {
            return Err(BenchError::InvalidInput(format!(
                "thin {} exceeds the {} post-burn-in iterations",
                self.thin,
                self.iterations - self.burn_in
            )));
        }
        Ok(())
    }

    /// Number of draws each chain retains.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count() {
        let c = McmcConfig {
            iterations: 1000,
            burn_in: 200,
            thin: 8,
            seed: 1,
            chains: 1,
        };
        assert_eq!(c.retained(), 100);
        let defaults = McmcConfig::default();
        assert_eq!((defaults.iterations, defaults.burn_in, defaults.thin), (200_000, 2_000, 200));
        assert_eq!(defaults.retained(), 990);
    }

    #[test]
    fn config_validation() {
        let mut c = McmcConfig {
            iterations: 100,
            burn_in: 100,
            thin: 1,
            seed: 0,
            chains: 1,
        };
        assert!(c.validate().is_err());
        c.burn_in = 10;
        c.thin = 91;
        assert!(c.validate().is_err());
        c.thin = 90;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn design_rejects_rank_deficiency() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(Design::new(x, vec![1, 2]).is_err());
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 2.0, 1.0, 1.0]);
        let d = Design::new(x, vec![1, 2]).unwrap();
        assert_eq!(d.area_of_unit(), &[0, 1, 1]);
        let zu = d.expand_areas(&DVector::from_vec(vec![5.0, -1.0]));
        assert_eq!(zu.as_slice(), &[5.0, -1.0, -1.0]);
        assert_eq!(d.area_sums(&DVector::from_vec(vec![1.0, 2.0, 3.0])).as_slice(), &[1.0, 5.0]);
    }

    #[test]
    fn propriety_condition() {
        let diffuse = Hyperparameters {
            a: 0.02,
            b: 0.02,
            c: 0.02,
            d: 0.02,
        };
        assert!(!diffuse.proper_with_flat_beta(3));
        assert!(Hyperparameters::default().proper_with_flat_beta(3));
        assert_eq!(Hyperparameters::default().sigma2_e_prior().mean(), 0.5);
    }

    #[test]
    fn inverse_gamma_mean() {
        let ig = InverseGamma::new(6.0, 4.0);
        assert_eq!(ig.mean(), 2.0);
    }
}
