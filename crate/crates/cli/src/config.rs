//! Run configuration: a flat `key = value` file overridden by flags.
//!
//! Recognized keys (all optional; flags of the same name win):
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `input` | survey CSV (`estimate`) | required for `estimate` |
//! | `out` | output directory | `out` |
//! | `schemes` | comma-separated loss schemes | `raked,inverse_variance,domain_weighted` |
//! | `iterations`, `burn_in`, `thin`, `chains` | MCMC settings | 200000, 2000, 200, 2 |
//! | `seed` | the single seed all randomness derives from | 0 |
//! | `a`, `b`, `c`, `d` | Inverse-Gamma hyperparameters | 2, 6, 2, 6 |
//! | `h_targets` | `posterior` or a CSV `area_id,h` | none (mean benchmarking only) |
//! | `draws` | also write `draws.csv` | false |
//! | `areas`, `min_size`, `max_size` | simulated design | 20, 5, 50 |
//! | `beta` | comma-separated true coefficients, intercept first | `-1,0.5,-0.25` |
//! | `sigma2_u`, `sigma2_e` | true variances | 0.25, 1 |
//! | `replicates` | simulation replicates | 1 |
//! | `zero_correction` | set the target to the Bayes aggregate | false |
//! | `reference` | directory of a previous `estimate` run | none |
//! | `instances`, `max_areas`, `max_units` | `verify` instance count and sizes | 100, 5, 6 |
//!
//! Blank lines and lines starting with `#` are ignored. No environment
//! variables are consulted.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use twostage_bench::hb_model::{Hyperparameters, McmcConfig};
use twostage_bench::sim::DeskSpecParams;
use twostage_bench::verify::VerifyOptions;
use twostage_bench::LossScheme;

pub const KEYS: &[&str] = &[
    "input",
    "out",
    "schemes",
    "iterations",
    "burn_in",
    "thin",
    "chains",
    "seed",
    "a",
    "b",
    "c",
    "d",
    "h_targets",
    "draws",
    "areas",
    "min_size",
    "max_size",
    "beta",
    "sigma2_u",
    "sigma2_e",
    "replicates",
    "zero_correction",
    "reference",
    "instances",
    "max_areas",
    "max_units",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Estimate,
    Simulate,
    Verify,
}

/// Where within-area spread targets come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HTargets {
    /// Posterior expectation of the weighted within-area spread.
    Posterior,
    /// CSV with columns `area_id,h`.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub params: DeskSpecParams,
    pub replicates: usize,
    pub zero_correction: bool,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub input_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub schemes: Vec<LossScheme>,
    pub mcmc: McmcConfig,
    pub hyper: Hyperparameters,
    pub h_targets: Option<HTargets>,
    pub seed: u64,
    pub write_draws: bool,
    pub sim: SimSettings,
    pub verify: VerifyOptions,
}

/// Key-value pairs with the line each came from (0 for flags).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (usize, String)>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {line}: expected 'key = value'"))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                bail!("config line {line}: unknown key '{key}'");
            }
            if values.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                bail!("config line {line}: key '{key}' given twice");
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Sets `key` from a flag, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl Display) {
        debug_assert!(KEYS.contains(&key), "unknown key {key}");
        self.values.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| {
                if *line == 0 {
                    anyhow!("--{}: bad value '{v}': {e}", key.replace('_', "-"))
                } else {
                    anyhow!("config line {line}: bad value '{v}' for {key}: {e}")
                }
            }),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| anyhow!("{key} (line {line}): bad entry '{s}': {e}"))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn get_bool(&self, key: &str) -> Result<bool> {
        match self.raw(key).map(|(l, v)| (l, v.to_ascii_lowercase())) {
            None => Ok(false),
            Some((_, v)) if ["true", "yes", "1", "on"].contains(&v.as_str()) => Ok(true),
            Some((_, v)) if ["false", "no", "0", "off"].contains(&v.as_str()) => Ok(false),
            Some((line, v)) => bail!("config line {line}: '{v}' is not a boolean for {key}"),
        }
    }
}

pub fn default_schemes() -> Vec<LossScheme> {
    vec![
        LossScheme::raked(),
        LossScheme::InverseVariance,
        LossScheme::DomainWeighted,
    ]
}

impl RunConfig {
    pub fn from_settings(mode: Mode, s: &Settings) -> Result<Self> {
        let seed: u64 = s.get_or("seed", 0)?;
        let defaults = McmcConfig::default();
        let mcmc = McmcConfig {
            iterations: s.get_or("iterations", defaults.iterations)?,
            burn_in: s.get_or("burn_in", defaults.burn_in)?,
            thin: s.get_or("thin", defaults.thin)?,
            chains: s.get_or("chains", defaults.chains)?,
            seed,
        };
        let h = Hyperparameters::default();
        let hyper = Hyperparameters {
            a: s.get_or("a", h.a)?,
            b: s.get_or("b", h.b)?,
            c: s.get_or("c", h.c)?,
            d: s.get_or("d", h.d)?,
        };
        let schemes = s.get_list::<LossScheme>("schemes")?.unwrap_or_else(default_schemes);
        let h_targets = s.get::<String>("h_targets")?.map(|v| match v.as_str() {
            "posterior" | "default" => HTargets::Posterior,
            path => HTargets::File(PathBuf::from(path)),
        });
        let p = DeskSpecParams::default();
        let params = DeskSpecParams {
            areas: s.get_or("areas", p.areas)?,
            min_size: s.get_or("min_size", p.min_size)?,
            max_size: s.get_or("max_size", p.max_size)?,
            beta: s.get_list("beta")?.unwrap_or(p.beta),
            sigma2_u: s.get_or("sigma2_u", p.sigma2_u)?,
            sigma2_e: s.get_or("sigma2_e", p.sigma2_e)?,
            seed,
        };
        let v = VerifyOptions::default();
        let config = Self {
            mode,
            input_path: s.get::<PathBuf>("input")?,
            output_dir: s.get_or("out", PathBuf::from("out"))?,
            schemes,
            mcmc,
            hyper,
            h_targets,
            seed,
            write_draws: s.get_bool("draws")?,
            sim: SimSettings {
                params,
                replicates: s.get_or("replicates", 1)?,
                zero_correction: s.get_bool("zero_correction")?,
                reference: s.get::<PathBuf>("reference")?,
            },
            verify: VerifyOptions {
                instances: s.get_or("instances", v.instances)?,
                seed,
                max_areas: s.get_or("max_areas", v.max_areas)?,
                max_units: s.get_or("max_units", v.max_units)?,
                fault: 0.0,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.mode, Mode::Estimate | Mode::Simulate) {
            if self.schemes.is_empty() {
                bail!("at least one loss scheme is required");
            }
            let mut tags: Vec<&str> = self.schemes.iter().map(|s| s.tag()).collect();
            tags.sort_unstable();
            if tags.windows(2).any(|w| w[0] == w[1]) {
                bail!("each loss scheme may be requested only once");
            }
            self.mcmc.validate()?;
            self.hyper.validate()?;
        }
        match self.mode {
            Mode::Estimate if self.input_path.is_none() => bail!("estimate needs --input"),
            Mode::Simulate if self.sim.replicates == 0 => bail!("replicates must be positive"),
            Mode::Verify if self.verify.instances == 0 || self.verify.max_areas == 0 || self.verify.max_units == 0 => {
                bail!("instances, max-areas and max-units must be positive")
            }
            _ => Ok(()),
        }
    }
}
