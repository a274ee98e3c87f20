//! Synthetic data from the logistic-normal model and the simulation study
//! comparing benchmarked estimators.
//!
//! Data are drawn as `logit(theta) = X beta + Z u + e`, `y ~ Bernoulli(theta)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bench_mean::percent_prmse_increase;
use crate::error::{BenchError, Result};
use crate::hb_model::{expit, Design, Hyperparameters, McmcConfig};
use crate::pipeline::{benchmark_scheme, fit_model, FittedModel};
use crate::types::{AreaBlock, BenchmarkSolution, SurveyDataset, UnitRecord};
use crate::weights::LossScheme;

/// True parameters and design of a simulation.
///
/// The first design column must be the intercept; the remaining columns
/// become the unit covariates of the simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub design: Design,
    pub beta_true: DVector<f64>,
    pub sigma2_u_true: f64,
    pub sigma2_e_true: f64,
    pub seed: u64,
    /// Per-unit survey weights, stacked area by area; uniform when `None`.
    pub survey_weights: Option<Vec<f64>>,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let x = self.design.x();
        if self.beta_true.len() != x.ncols() {
            return Err(BenchError::InvalidInput(format!(
                "beta_true has {} entries for {} design columns",
                self.beta_true.len(),
                x.ncols()
            )));
        }
        if x.ncols() < 2 || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(BenchError::InvalidInput(
                "design needs an intercept column followed by at least one covariate".into(),
            ));
        }
        for (name, v) in [("sigma2_u", self.sigma2_u_true), ("sigma2_e", self.sigma2_e_true)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(BenchError::InvalidInput(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(BenchError::InvalidInput("beta_true must be finite".into()));
        }
        if let Some(w) = &self.survey_weights {
            if w.len() != x.nrows() || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(BenchError::InvalidInput(
                    "survey weights need one positive value per unit".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Parameters of a randomly generated design: area sizes log-uniform in
/// `[min_size, max_size]`, covariates standard normal (one per entry of
/// `beta` after the intercept) and uniform survey weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskSpecParams {
    pub areas: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Intercept first.
    pub beta: Vec<f64>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub seed: u64,
}

impl Default for DeskSpecParams {
    /// 20 areas of 5 to 50 units, `beta = (-1, 0.5, -0.25)`,
    /// `sigma2_u = 0.25`, `sigma2_e = 1`.
    fn default() -> Self {
        Self {
            areas: 20,
            min_size: 5,
            max_size: 50,
            beta: vec![-1.0, 0.5, -0.25],
            sigma2_u: 0.25,
            sigma2_e: 1.0,
            seed: 0,
        }
    }
}

/// Builds a [`SimSpec`] whose design and truth depend only on `params`.
pub fn desk_spec(params: &DeskSpecParams) -> Result<SimSpec> {
    if params.areas == 0 || params.min_size == 0 || params.min_size > params.max_size {
        return Err(BenchError::InvalidInput(format!(
            "need at least one area and 1 <= min_size <= max_size, got {} areas of {}..{}",
            params.areas, params.min_size, params.max_size
        )));
    }
    if params.beta.len() < 2 {
        return Err(BenchError::InvalidInput(
            "beta needs an intercept and at least one covariate coefficient".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(u64::MAX);
    let (lo, hi) = ((params.min_size as f64).ln(), (params.max_size as f64).ln());
    let sizes: Vec<usize> = (0..params.areas)
        .map(|_| {
            let n = rng.random_range(lo..=hi).exp().round() as usize;
            n.clamp(params.min_size, params.max_size)
        })
        .collect();
    let n: usize = sizes.iter().sum();
    let x = DMatrix::from_fn(n, params.beta.len(), |_, c| {
        if c == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    });
    let spec = SimSpec {
        design: Design::new(x, sizes)?,
        beta_true: DVector::from_vec(params.beta.clone()),
        sigma2_u_true: params.sigma2_u,
        sigma2_e_true: params.sigma2_e,
        seed: params.seed,
        survey_weights: None,
    };
    spec.validate()?;
    Ok(spec)
}

/// The desk-scale default spec of [`DeskSpecParams::default`] under `seed`.
pub fn default_spec(seed: u64) -> SimSpec {
    desk_spec(&DeskSpecParams {
        seed,
        ..Default::default()
    })
    .expect("default parameters are valid")
}

/// A simulated dataset together with the values it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: SurveyDataset,
    pub u_true: DVector<f64>,
    /// `expit(X beta + Z u + e)` per area and unit.
    pub true_probabilities: Vec<Vec<f64>>,
}

/// Draws replicate `replicate` of the data under `spec`.
pub fn simulate(spec: &SimSpec, replicate: usize) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(replicate as u64);
    let design = &spec.design;
    let normal = |var: f64| Normal::new(0.0, var.sqrt()).expect("nonnegative variance");
    let (u_dist, e_dist) = (normal(spec.sigma2_u_true), normal(spec.sigma2_e_true));
    let u = DVector::from_fn(design.num_areas(), |_, _| u_dist.sample(&mut rng));
    let eta = design.x() * &spec.beta_true + design.expand_areas(&u);

    let mut areas = Vec::with_capacity(design.num_areas());
    let mut probs = Vec::with_capacity(design.num_areas());
    let mut k = 0;
    for (i, &ni) in design.area_sizes().iter().enumerate() {
        let mut units = Vec::with_capacity(ni);
        let mut area_probs = Vec::with_capacity(ni);
        for j in 0..ni {
            let p = expit(eta[k] + e_dist.sample(&mut rng));
            let y = rng.random::<f64>() < p;
            units.push(UnitRecord {
                unit_id: format!("{}", j + 1),
                response: y,
                survey_weight: spec.survey_weights.as_ref().map_or(1.0, |w| w[k]),
                covariates: design.x().row(k).iter().skip(1).copied().collect(),
            });
            area_probs.push(p);
            k += 1;
        }
        areas.push(AreaBlock {
            area_id: format!("{}", i + 1),
            units,
        });
        probs.push(area_probs);
    }
    Ok(Simulation {
        dataset: SurveyDataset::new(areas)?,
        u_true: u,
        true_probabilities: probs,
    })
}

/// The first replicate's dataset under `spec`.
pub fn simulate_dataset(spec: &SimSpec) -> Result<SurveyDataset> {
    Ok(simulate(spec, 0)?.dataset)
}

/// Settings of a simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub schemes: Vec<LossScheme>,
    pub mcmc: McmcConfig,
    pub hyper: Hyperparameters,
    pub replicates: usize,
    /// Replace the target by the weighted aggregate of the Bayes estimates,
    /// so benchmarking makes no correction.
    pub zero_correction: bool,
    /// Area estimates of each scheme (keyed by tag) on reference data. The
    /// difference series is taken against these; without them it is taken
    /// against the Bayes area estimates of the simulated data.
    pub reference: Option<BTreeMap<String, Vec<f64>>>,
}

impl StudyOptions {
    pub fn new(schemes: Vec<LossScheme>, mcmc: McmcConfig) -> Self {
        Self {
            schemes,
            mcmc,
            hyper: Hyperparameters::default(),
            replicates: 1,
            zero_correction: false,
            reference: None,
        }
    }
}

/// Per-area series of one scheme, indexed like the areas.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSeries {
    pub scheme: LossScheme,
    pub solution: BenchmarkSolution,
    /// `delta^scheme_i - delta^B_i`.
    pub adjustment: Vec<f64>,
    /// Percent increase of the posterior root MSE over the posterior SD.
    pub pct_prmse: Vec<Option<f64>>,
    /// Estimate on simulated data minus estimate on reference data.
    pub difference: Vec<f64>,
}

/// Outcome of one simulation replicate.
#[derive(Debug, Clone)]
pub struct StudyReport {
    pub replicate: usize,
    pub area_sizes: Vec<usize>,
    pub simulation: Simulation,
    pub fit: FittedModel,
    pub bayes: BenchmarkSolution,
    pub schemes: Vec<SchemeSeries>,
}

impl StudyReport {
    pub fn scheme(&self, scheme: LossScheme) -> Option<&SchemeSeries> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

/// Simulates, fits the model and benchmarks under every requested scheme,
/// once per replicate. Replicate `r` uses data stream `r` of `spec.seed` and
/// MCMC seed `mcmc.seed + r`.
pub fn run_simulation_study(spec: &SimSpec, options: &StudyOptions) -> Result<Vec<StudyReport>> {
    if options.schemes.is_empty() {
        return Err(BenchError::InvalidInput("no loss schemes requested".into()));
    }
    if options.replicates == 0 {
        return Err(BenchError::InvalidInput("replicate count must be positive".into()));
    }
    (0..options.replicates)
        .map(|r| run_replicate(spec, options, r))
        .collect()
}

fn run_replicate(spec: &SimSpec, options: &StudyOptions, replicate: usize) -> Result<StudyReport> {
    let simulation = simulate(spec, replicate)?;
    let mcmc = McmcConfig {
        seed: options.mcmc.seed.wrapping_add(replicate as u64),
        ..options.mcmc
    };
    let mut fit = fit_model(&simulation.dataset, options.hyper, &mcmc)?;
    let bayes = fit.bayes_solution();
    if options.zero_correction {
        fit.constraint.target = fit.constraint.aggregate(&fit.posterior.mean_theta);
    }
    let problem = fit.problem();
    let mut schemes = Vec::with_capacity(options.schemes.len());
    for &scheme in &options.schemes {
        let solution = benchmark_scheme(&problem, scheme, None)?;
        let residuals = solution.residuals(&fit.constraint);
        if !residuals.within(crate::tolerance::CONSTRAINT) {
            return Err(BenchError::NumericDegeneracy(format!(
                "scheme {scheme} misses the constraints by {:e}",
                residuals.max()
            )));
        }
        let pct_prmse = percent_prmse_increase(&solution, &fit.posterior)?;
        let adjustment = solution
            .area_estimates
            .iter()
            .zip(&bayes.area_estimates)
            .map(|(d, b)| d - b)
            .collect();
        let reference = match &options.reference {
            None => bayes.area_estimates.clone(),
            Some(map) => {
                let r = map.get(scheme.tag()).ok_or_else(|| {
                    BenchError::MissingInput(format!("no reference estimates for scheme {scheme}"))
                })?;
                if r.len() != solution.area_estimates.len() {
                    return Err(BenchError::InvalidInput(format!(
                        "reference for scheme {scheme} has {} areas, simulation has {}",
                        r.len(),
                        solution.area_estimates.len()
                    )));
                }
                r.clone()
            }
        };
        let difference = solution
            .area_estimates
            .iter()
            .zip(&reference)
            .map(|(d, r)| d - r)
            .collect();
        schemes.push(SchemeSeries {
            scheme,
            solution,
            adjustment,
            pct_prmse,
            difference,
        });
    }
    Ok(StudyReport {
        replicate,
        area_sizes: spec.design.area_sizes().to_vec(),
        simulation,
        fit,
        bayes,
        schemes,
    })
}
