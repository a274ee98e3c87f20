//! Command-line front end: survey ingestion, configuration and output tables.

pub mod commands;
pub mod config;
pub mod input;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Mode, RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "twobench", version, about = "Two-stage benchmarked hierarchical Bayes estimates")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a survey CSV and benchmark the estimates.
    Estimate(EstimateArgs),
    /// Simulate surveys, fit and benchmark each replicate.
    Simulate(SimulateArgs),
    /// Compare the closed forms with a brute-force solver on random instances.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Key-value configuration file; flags override its values.
    #[arg(long, visible_alias = "spec")]
    pub config: Option<PathBuf>,
    /// Loss schemes: constant, inverse_variance, raked[:g], domain_weighted.
    #[arg(long, visible_alias = "scheme")]
    pub schemes: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "iters", visible_alias = "iterations")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long = "prior-a")]
    pub a: Option<f64>,
    #[arg(long = "prior-b")]
    pub b: Option<f64>,
    #[arg(long = "prior-c")]
    pub c: Option<f64>,
    #[arg(long = "prior-d")]
    pub d: Option<f64>,
}

impl McmcArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        s.set_opt("schemes", self.schemes.as_ref());
        s.set_opt("out", self.out.as_ref().map(|p| p.display()));
        s.set_opt("seed", self.seed);
        s.set_opt("iterations", self.iterations);
        s.set_opt("burn_in", self.burn_in);
        s.set_opt("thin", self.thin);
        s.set_opt("chains", self.chains);
        s.set_opt("a", self.a);
        s.set_opt("b", self.b);
        s.set_opt("c", self.c);
        s.set_opt("d", self.d);
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: McmcArgs,
    /// Survey CSV: area_id,unit_id,y,weight,x1,...,xk.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also benchmark the within-area spread: `posterior` or a CSV area_id,h.
    #[arg(long)]
    pub h_targets: Option<String>,
    /// Write every retained draw to draws.csv.
    #[arg(long)]
    pub draws: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: McmcArgs,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Benchmark to the aggregate of the Bayes estimates (no correction).
    #[arg(long)]
    pub zero_correction: bool,
    /// Output directory of an earlier run whose area estimates are the
    /// reference of the difference series.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub areas: Option<usize>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    /// True coefficients, intercept first, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long)]
    pub sigma2_u: Option<f64>,
    #[arg(long)]
    pub sigma2_e: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_areas: Option<usize>,
    #[arg(long)]
    pub max_units: Option<usize>,
    /// Where failing instances are dumped besides stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb the closed form by 1e-6 so the comparison must fail.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

impl Cli {
    /// Resolves the configuration of the chosen command.
    pub fn run_config(&self) -> Result<RunConfig> {
        match &self.command {
            Command::Estimate(a) => {
                let mut s = a.common.settings()?;
                s.set_opt("input", a.input.as_ref().map(|p| p.display()));
                s.set_opt("h_targets", a.h_targets.as_ref());
                if a.draws {
                    s.set("draws", true);
                }
                RunConfig::from_settings(Mode::Estimate, &s)
            }
            Command::Simulate(a) => {
                let mut s = a.common.settings()?;
                s.set_opt("replicates", a.replicates);
                if a.zero_correction {
                    s.set("zero_correction", true);
                }
                s.set_opt("reference", a.reference.as_ref().map(|p| p.display()));
                s.set_opt("areas", a.areas);
                s.set_opt("min_size", a.min_size);
                s.set_opt("max_size", a.max_size);
                s.set_opt("beta", a.beta.as_ref());
                s.set_opt("sigma2_u", a.sigma2_u);
                s.set_opt("sigma2_e", a.sigma2_e);
                RunConfig::from_settings(Mode::Simulate, &s)
            }
            Command::Verify(a) => {
                let mut s = match &a.config {
                    Some(path) => Settings::read(path)?,
                    None => Settings::default(),
                };
                s.set_opt("instances", a.instances);
                s.set_opt("seed", a.seed);
                s.set_opt("max_areas", a.max_areas);
                s.set_opt("max_units", a.max_units);
                let mut config = RunConfig::from_settings(Mode::Verify, &s)?;
                if a.inject_fault {
                    config.verify.fault = 1e-6;
                }
                Ok(config)
            }
        }
    }

    pub fn run(&self) -> Result<()> {
        let config = self.run_config()?;
        match &self.command {
            Command::Estimate(_) => commands::cmd_estimate(&config),
            Command::Simulate(_) => commands::cmd_simulate(&config),
            Command::Verify(a) => commands::cmd_verify(&config, a.out.as_deref()),
        }
    }
}

/// Logging to stderr at a level set only by `-v` flags.
pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}
