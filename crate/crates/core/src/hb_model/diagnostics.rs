//! Convergence summaries for retained Gibbs draws.

use std::fmt;
use std::str::FromStr;

use super::gibbs::RetainedDraw;
use super::GibbsState;
use crate::error::{BenchError, Result};

/// Lags at which autocorrelations are reported.
pub const REPORTED_LAGS: [usize; 3] = [1, 5, 10];

/// A scalar model parameter, named as in draw dumps (`beta[0]`, `u[3]`,
/// `theta[17]`, `sigma2_e`, `sigma2_u`). Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    Beta(usize),
    U(usize),
    Theta(usize),
    Sigma2E,
    Sigma2U,
}

impl ParamName {
    /// The parameter's value in `state`, if the index is in range.
    pub fn value(&self, state: &GibbsState) -> Option<f64> {
        match *self {
            ParamName::Beta(k) => state.beta.get(k).copied(),
            ParamName::U(i) => state.u.get(i).copied(),
            ParamName::Theta(n) => state.theta.get(n).copied(),
            ParamName::Sigma2E => Some(state.sigma2_e),
            ParamName::Sigma2U => Some(state.sigma2_u),
        }
    }

    /// Every fixed-dimension parameter: all beta, u and both variances.
    pub fn global(num_coefficients: usize, num_areas: usize) -> Vec<ParamName> {
        (0..num_coefficients)
            .map(ParamName::Beta)
            .chain((0..num_areas).map(ParamName::U))
            .chain([ParamName::Sigma2E, ParamName::Sigma2U])
            .collect()
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamName::Beta(k) => write!(f, "beta[{k}]"),
            ParamName::U(i) => write!(f, "u[{i}]"),
            ParamName::Theta(n) => write!(f, "theta[{n}]"),
            ParamName::Sigma2E => f.write_str("sigma2_e"),
            ParamName::Sigma2U => f.write_str("sigma2_u"),
        }
    }
}

impl FromStr for ParamName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "sigma2_e" => return Ok(ParamName::Sigma2E),
            "sigma2_u" => return Ok(ParamName::Sigma2U),
            _ => {}
        }
        let bad = || BenchError::InvalidInput(format!("unknown parameter name '{s}'"));
        let (head, rest) = s.split_once('[').ok_or_else(bad)?;
        let index: usize = rest
            .strip_suffix(']')
            .and_then(|d| d.parse().ok())
            .ok_or_else(bad)?;
        match head {
            "beta" => Ok(ParamName::Beta(index)),
            "u" => Ok(ParamName::U(index)),
            "theta" => Ok(ParamName::Theta(index)),
            _ => Err(bad()),
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Sample autocorrelation at `lag` (standard biased estimator). `NaN` for a
/// constant series or a lag at least the series length.
pub fn autocorrelation(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    if lag >= n {
        return f64::NAN;
    }
    let m = mean(series);
    let denom: f64 = series.iter().map(|v| (v - m).powi(2)).sum();
    if denom == 0.0 {
        return f64::NAN;
    }
    let num: f64 = (0..n - lag)
        .map(|t| (series[t] - m) * (series[t + lag] - m))
        .sum();
    num / denom
}

/// Effective sample size with Geyer's initial positive sequence truncation.
/// A constant series has effective size equal to its length.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    if population_variance(series) == 0.0 {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocorrelation(series, 2 * k) + autocorrelation(series, 2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    // Keep the estimate within [1, n * log10(n)] so nearly antithetic chains
    // cannot produce absurd values.
    let cap = n as f64 * (n as f64).log10();
    if tau <= 0.0 {
        cap
    } else {
        (n as f64 / tau).min(cap)
    }
}

/// Scale reduction `sqrt((W + B) / W)` for two or more equal-length chains,
/// with `W` the mean within-chain variance and `B` the variance of the chain
/// means (both population moments). Identical chains give exactly 1.
pub fn scale_reduction(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 2) {
        return None;
    }
    let within = chains.iter().map(|c| population_variance(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between = population_variance(&means);
    if within == 0.0 {
        return (between == 0.0).then_some(1.0);
    }
    Some(((within + between) / within).sqrt())
}

/// Diagnostics for one monitored parameter, pooled over chains where noted.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: ParamName,
    pub mean: f64,
    pub sd: f64,
    /// `(lag, autocorrelation)` from the first chain.
    pub autocorrelations: Vec<(usize, f64)>,
    /// Sum of the per-chain effective sample sizes.
    pub ess: f64,
    /// `None` with a single chain.
    pub scale_reduction: Option<f64>,
    /// Retained values per chain, for trace plots.
    pub trace: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    /// Sweep numbers of the retained draws of the first chain.
    pub iterations: Vec<usize>,
    pub params: Vec<ParamDiagnostics>,
}

impl DiagnosticReport {
    /// Largest scale reduction over the monitored parameters.
    pub fn max_scale_reduction(&self) -> Option<f64> {
        self.params
            .iter()
            .filter_map(|p| p.scale_reduction)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Trace series as CSV text: `chain,iteration,<param>,...`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("chain,iteration");
        for p in &self.params {
            out.push(',');
            out.push_str(&p.name.to_string());
        }
        out.push('\n');
        for c in 0..self.chains {
            for (t, it) in self.iterations.iter().enumerate() {
                out.push_str(&format!("{c},{it}"));
                for p in &self.params {
                    out.push_str(&format!(",{:.11e}", p.trace[c][t]));
                }
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for DiagnosticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "chains: {}  retained draws per chain: {}",
            self.chains, self.draws_per_chain
        )?;
        write!(f, "{:<12} {:>14} {:>14}", "parameter", "mean", "sd")?;
        for lag in REPORTED_LAGS {
            write!(f, " {:>9}", format!("acf{lag}"))?;
        }
        writeln!(f, " {:>10} {:>8}", "ess", "rhat")?;
        for p in &self.params {
            write!(f, "{:<12} {:>14.6e} {:>14.6e}", p.name.to_string(), p.mean, p.sd)?;
            for (_, r) in &p.autocorrelations {
                write!(f, " {:>9.4}", r)?;
            }
            let rhat = p
                .scale_reduction
                .map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
            writeln!(f, " {:>10.1} {:>8}", p.ess, rhat)?;
        }
        if let Some(r) = self.max_scale_reduction() {
            writeln!(f, "max rhat: {r:.4}")?;
        }
        Ok(())
    }
}

/// Autocorrelations, effective sample sizes, scale reductions and traces for
/// the `monitored` parameters over equal-length chains.
pub fn mcmc_diagnostics(
    chains: &[Vec<RetainedDraw>],
    monitored: &[ParamName],
) -> Result<DiagnosticReport> {
    let first = chains
        .first()
        .ok_or(BenchError::InsufficientSample { needed: 1, got: 0 })?;
    if first.len() < 2 {
        return Err(BenchError::InsufficientSample {
            needed: 2,
            got: first.len(),
        });
    }
    if chains.iter().any(|c| c.len() != first.len()) {
        return Err(BenchError::InvalidInput(
            "chains have different numbers of retained draws".into(),
        ));
    }
    let mut params = Vec::with_capacity(monitored.len());
    for &name in monitored {
        let trace = chains
            .iter()
            .map(|c| {
                c.iter()
                    .map(|d| name.value(&d.state))
                    .collect::<Option<Vec<f64>>>()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| BenchError::InvalidInput(format!("parameter {name} is out of range")))?;
        let pooled: Vec<f64> = trace.iter().flatten().copied().collect();
        params.push(ParamDiagnostics {
            name,
            mean: mean(&pooled),
            sd: population_variance(&pooled).sqrt(),
            autocorrelations: REPORTED_LAGS
                .iter()
                .map(|&lag| (lag, autocorrelation(&trace[0], lag)))
                .collect(),
            ess: trace.iter().map(|c| effective_sample_size(c)).sum(),
            scale_reduction: scale_reduction(&trace),
            trace,
        });
    }
    Ok(DiagnosticReport {
        chains: chains.len(),
        draws_per_chain: first.len(),
        iterations: first.iter().map(|d| d.iteration).collect(),
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for name in [
            ParamName::Beta(2),
            ParamName::U(0),
            ParamName::Theta(41),
            ParamName::Sigma2E,
            ParamName::Sigma2U,
        ] {
            assert_eq!(name.to_string().parse::<ParamName>().unwrap(), name);
        }
        assert!("gamma[1]".parse::<ParamName>().is_err());
        assert!("beta[x]".parse::<ParamName>().is_err());
    }

    #[test]
    fn white_noise_lag_one_near_zero() {
        let n = 20_000;
        let r = autocorrelation(&white_noise(n, 5), 1);
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "{r}");
    }

    #[test]
    fn ar1_lag_one_near_coefficient() {
        let n = 20_000;
        let r = autocorrelation(&ar1(n, 0.5, 9), 1);
        // Bartlett variance of the lag-1 estimate for AR(1): (1 - rho^2) / n.
        let se = (0.75 / n as f64).sqrt();
        assert!((r - 0.5).abs() < 3.0 * se, "{r}");
    }

    #[test]
    fn ess_matches_ar1_theory() {
        // Integrated autocorrelation time of AR(1) is (1 + rho) / (1 - rho) = 3.
        let n = 60_000;
        let ess = effective_sample_size(&ar1(n, 0.5, 2));
        let expected = n as f64 / 3.0;
        assert!((ess / expected - 1.0).abs() < 0.1, "{ess}");
        let iid = effective_sample_size(&white_noise(n, 4));
        assert!((iid / n as f64 - 1.0).abs() < 0.1, "{iid}");
    }

    #[test]
    fn scale_reduction_cases() {
        let a = white_noise(500, 1);
        assert_eq!(scale_reduction(&[a.clone(), a.clone()]), Some(1.0));
        assert_eq!(scale_reduction(&[a.clone()]), None);
        let shifted: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(scale_reduction(&[a, shifted]).unwrap() > 4.0);
    }
}
