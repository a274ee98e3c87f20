use thiserror::Error;

/// Errors raised by the estimators, the sampler and the data plumbing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("area {area}: weighted spread of the Bayes estimates is zero but the variability target is {target}")]
    DegenerateSpread { area: usize, target: f64 },

    #[error("sampler diverged at iteration {iteration}: {detail}")]
    SamplerDivergence { iteration: usize, detail: String },

    #[error("insufficient sample: need at least {needed} draws, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;
