//! Numerical tolerances shared by the estimators and their checks.

/// Residual allowed on the benchmarking constraints of any output.
pub const CONSTRAINT: f64 = 1e-10;

/// Residual allowed on exact algebraic identities.
pub const IDENTITY: f64 = 1e-12;

/// Componentwise agreement required between a closed form and the KKT oracle.
pub const ORACLE: f64 = 1e-9;

/// Weight vectors whose sum misses 1 by more than this are rejected.
pub const NORMALIZATION_REJECT: f64 = 1e-6;

/// Weight vectors whose sum misses 1 by at most this are taken as normalized.
pub const NORMALIZATION_EXACT: f64 = 1e-12;

/// Reciprocal condition number below which a factorization is reported singular.
pub const RCOND: f64 = 1e-12;
