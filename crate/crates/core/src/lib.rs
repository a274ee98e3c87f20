//! Two-stage benchmarked Bayes estimation for small areas.
//!
//! Bayes estimates of unit-level parameters are adjusted so that their
//! weighted means match area-level estimates, and the weighted mean of the
//! area estimates matches an overall target, at minimum posterior expected
//! weighted squared error. The crate provides
//!
//! - closed forms for mean benchmarking ([`bench_mean`]), mean plus
//!   within-area variability ([`bench_var`]) and matrix-weighted
//!   multivariate benchmarking ([`bench_multi`]);
//! - a dense KKT solver that serves as an independent oracle ([`oracle`]);
//! - a Gibbs sampler for the hierarchical logistic-normal model that produces
//!   the posterior inputs ([`hb_model`]);
//! - synthetic data and the simulation comparison pipeline ([`sim`]).

pub mod bench_mean;
pub mod bench_multi;
pub mod bench_var;
pub mod error;
pub mod hb_model;
pub mod instances;
pub mod oracle;
pub mod pipeline;
pub mod posterior;
pub mod sim;
pub mod tolerance;
pub mod types;
pub mod validate;
pub mod verify;
pub mod weights;

pub use bench_mean::{benchmark_mean, benchmark_raked, percent_prmse_increase, pmse};
pub use bench_multi::{benchmark_mean_multi, MultiBenchmarkProblem, MultiBenchmarkSolution};
pub use bench_var::{benchmark_mean_and_variability, default_variability_targets, VariabilityTargets};
pub use error::{BenchError, Result};
pub use posterior::PosteriorSummary;
pub use types::{
    AreaBlock, BenchmarkProblem, BenchmarkSolution, ConstraintWeights, LossWeights, SurveyDataset,
    UnitRecord,
};
pub use validate::{validate_problem, Violation};
pub use weights::{constraint_weights_from_survey, make_loss_weights, LossScheme};
