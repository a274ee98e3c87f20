//! Model fit followed by benchmarking, shared by the simulation study and the
//! command-line front end.

use crate::bench_mean::{benchmark_mean, pmse};
use crate::bench_var::{benchmark_mean_and_variability, VariabilityTargets};
use crate::error::Result;
use crate::hb_model::{run_chains, summarize_posterior, GibbsState, HBModelSpec, Hyperparameters, McmcConfig, RetainedDraw, SummaryScale};
use crate::posterior::PosteriorSummary;
use crate::types::{BenchmarkProblem, BenchmarkSolution, ConstraintWeights, LossWeights, SurveyDataset};
use crate::weights::{constraint_weights_from_survey, make_loss_weights, LossScheme};

/// Retained draws and their probability-scale summary.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: HBModelSpec,
    pub chains: Vec<Vec<RetainedDraw>>,
    pub posterior: PosteriorSummary,
    pub constraint: ConstraintWeights,
}

impl FittedModel {
    /// Bayes estimates: posterior means of the unit and area proportions.
    pub fn bayes_solution(&self) -> BenchmarkSolution {
        BenchmarkSolution {
            unit_estimates: self.posterior.mean_theta.clone(),
            area_estimates: self.posterior.mean_area.clone(),
            unit_pmse: Some(self.posterior.var_theta.clone()),
            area_pmse: Some(self.posterior.var_area.clone()),
            scheme_tag: String::from("bayes"),
        }
    }

    /// Problem with the Bayes estimates and constant loss weights.
    pub fn problem(&self) -> BenchmarkProblem {
        BenchmarkProblem {
            bayes_estimates: self.posterior.mean_theta.clone(),
            loss: LossWeights::constant(&self.posterior.mean_theta),
            constraint: self.constraint.clone(),
            posterior: Some(self.posterior.clone()),
        }
    }
}

/// Runs the sampler on `data` and summarizes all chains together.
pub fn fit_model(
    data: &SurveyDataset,
    hyper: Hyperparameters,
    mcmc: &McmcConfig,
) -> Result<FittedModel> {
    let spec = HBModelSpec::from_dataset(data, hyper)?;
    let constraint = constraint_weights_from_survey(data)?;
    let chains = run_chains(&spec, mcmc)?;
    let pooled: Vec<GibbsState> = chains.iter().flatten().map(|d| d.state.clone()).collect();
    let posterior = summarize_posterior(&pooled, &constraint, SummaryScale::Probability)?;
    Ok(FittedModel {
        spec,
        chains,
        posterior,
        constraint,
    })
}

/// Benchmarks `problem`'s Bayes estimates under `scheme` and fills the PMSE.
///
/// With variability targets the unit loss weights are replaced by the unit
/// weights (the only case with a closed form) and the area loss weights of
/// the scheme are kept.
pub fn benchmark_scheme(
    problem: &BenchmarkProblem,
    scheme: LossScheme,
    variability: Option<&VariabilityTargets>,
) -> Result<BenchmarkSolution> {
    let mut loss = make_loss_weights(
        scheme,
        &problem.bayes_estimates,
        &problem.constraint,
        problem.posterior.as_ref(),
    )?;
    let mut solution = match variability {
        None => benchmark_mean(&problem.with_loss(loss))?,
        Some(targets) => {
            loss.unit_loss = problem.constraint.unit_weights.clone();
            benchmark_mean_and_variability(&problem.with_loss(loss), targets)?
        }
    };
    if let Some(posterior) = &problem.posterior {
        solution = pmse(&solution, posterior)?;
    }
    solution.scheme_tag = scheme.tag().to_string();
    Ok(solution)
}
