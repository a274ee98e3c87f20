//! The `estimate`, `simulate` and `verify` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use twostage_bench::bench_mean::unit_percent_prmse_increase;
use twostage_bench::hb_model::{mcmc_diagnostics, write_draws, ParamName, RetainedDraw};
use twostage_bench::pipeline::{benchmark_scheme, fit_model, FittedModel};
use twostage_bench::sim::{desk_spec, run_simulation_study, StudyOptions, StudyReport};
use twostage_bench::verify::run_verification;
use twostage_bench::{
    constraint_weights_from_survey, default_variability_targets, percent_prmse_increase, BenchmarkSolution,
    ConstraintWeights, SurveyDataset, VariabilityTargets,
};

use crate::config::{HTargets, RunConfig};
use crate::input::{read_h_targets, read_survey_csv, write_survey_csv};
use crate::output::{
    num, opt_num, read_estimates, write_constraint_report, ConstraintCheck, EstimateRows, Table, ESTIMATE_HEADER,
};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn estimates_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("estimates_{tag}.csv"))
}

fn simulated_data_path(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("simulated_data_{replicate}.csv"))
}

/// Per-scheme tables, optionally with a leading replicate column.
struct SchemeTables {
    estimates: Table,
    pmse: Table,
    adjustment: Table,
    prmse: Table,
    difference: Option<Table>,
}

impl SchemeTables {
    fn create(dir: &Path, tag: &str, replicated: bool) -> Result<Self> {
        let path = |kind: &str| dir.join(format!("{kind}_{tag}.csv"));
        Ok(Self {
            estimates: Table::create(&estimates_path(dir, tag), replicated, ESTIMATE_HEADER)?,
            pmse: Table::create(
                &path("pmse"),
                replicated,
                &["area_id", "n_i", "posterior_var", "pmse", "pct_prmse"],
            )?,
            adjustment: Table::create(&path("plotdata_adjustment"), replicated, &["area_id", "n_i", "adjustment"])?,
            prmse: Table::create(&path("plotdata_prmse"), replicated, &["area_id", "n_i", "pct_prmse"])?,
            difference: if replicated {
                Some(Table::create(&path("plotdata_difference"), true, &["area_id", "n_i", "difference"])?)
            } else {
                None
            },
        })
    }

    fn write(
        &mut self,
        replicate: usize,
        data: &SurveyDataset,
        fit: &FittedModel,
        bayes: &BenchmarkSolution,
        solution: &BenchmarkSolution,
        difference: Option<&[f64]>,
    ) -> Result<()> {
        let unit_pct = unit_percent_prmse_increase(solution, &fit.posterior)?;
        let area_pct = percent_prmse_increase(solution, &fit.posterior)?;
        EstimateRows {
            data,
            bayes,
            solution,
            unit_pct: &unit_pct,
            area_pct: &area_pct,
        }
        .write(&mut self.estimates, replicate)?;
        let area_pmse = solution.area_pmse.as_ref().expect("benchmark_scheme fills PMSE");
        for (i, area) in data.areas().iter().enumerate() {
            let id = area.area_id.clone();
            let n = area.units.len().to_string();
            self.pmse.row(
                replicate,
                vec![
                    id.clone(),
                    n.clone(),
                    num(fit.posterior.var_area[i]),
                    num(area_pmse[i]),
                    opt_num(area_pct[i]),
                ],
            )?;
            let adjustment = solution.area_estimates[i] - bayes.area_estimates[i];
            self.adjustment.row(replicate, vec![id.clone(), n.clone(), num(adjustment)])?;
            self.prmse.row(replicate, vec![id.clone(), n.clone(), opt_num(area_pct[i])])?;
            if let (Some(table), Some(diff)) = (self.difference.as_mut(), difference) {
                table.row(replicate, vec![id, n, num(diff[i])])?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.estimates.finish()?;
        self.pmse.finish()?;
        self.adjustment.finish()?;
        self.prmse.finish()?;
        if let Some(t) = self.difference {
            t.finish()?;
        }
        Ok(())
    }
}

fn diagnostics_text(chains: &[Vec<RetainedDraw>], fit: &FittedModel) -> Result<(String, String)> {
    let monitored = ParamName::global(fit.spec.design.num_coefficients(), fit.spec.design.num_areas());
    let report = mcmc_diagnostics(chains, &monitored)?;
    if let Some(r) = report.max_scale_reduction() {
        if r > 1.1 {
            log::warn!("max scale reduction {r:.3} exceeds 1.1; consider more iterations");
        }
    }
    Ok((report.to_string(), report.trace_csv()))
}

fn variability_targets(config: &RunConfig, fit: &FittedModel, data: &SurveyDataset) -> Result<Option<VariabilityTargets>> {
    Ok(match &config.h_targets {
        None => None,
        Some(HTargets::Posterior) => Some(default_variability_targets(&fit.posterior, &fit.constraint)?),
        Some(HTargets::File(path)) => {
            let ids: Vec<String> = data.areas().iter().map(|a| a.area_id.clone()).collect();
            let h = read_h_targets(path, &ids)?;
            Some(VariabilityTargets::new(h, &fit.problem())?)
        }
    })
}

/// Fits the model to the survey CSV, benchmarks under every scheme and
/// writes the tables, then re-reads them to verify the constraints.
pub fn cmd_estimate(config: &RunConfig) -> Result<()> {
    let input = config.input_path.as_deref().context("estimate needs --input")?;
    let data = read_survey_csv(input)?;
    info!(
        "read {} units in {} areas with {} covariates",
        data.num_units(),
        data.num_areas(),
        data.num_covariates()
    );
    let out = &config.output_dir;
    create_dir(out)?;

    let fit = fit_model(&data, config.hyper, &config.mcmc)?;
    let bayes = fit.bayes_solution();
    let (diag, trace) = diagnostics_text(&fit.chains, &fit)?;
    fs::write(out.join("diagnostics.txt"), diag)?;
    fs::write(out.join("plotdata_trace.csv"), trace)?;
    if config.write_draws {
        let file = fs::File::create(out.join("draws.csv"))?;
        write_draws(std::io::BufWriter::new(file), &fit.chains)?;
    }

    let targets = variability_targets(config, &fit, &data)?;
    let problem = fit.problem();
    for &scheme in &config.schemes {
        let solution = benchmark_scheme(&problem, scheme, targets.as_ref())
            .with_context(|| format!("benchmarking under {scheme}"))?;
        let mut tables = SchemeTables::create(out, scheme.tag(), false)?;
        tables.write(0, &data, &fit, &bayes, &solution, None)?;
        tables.finish()?;
        info!("wrote tables for {scheme}");
    }

    // Round trip: weights from the input file as read again, estimates from disk.
    let reread = read_survey_csv(input)?;
    let constraint = constraint_weights_from_survey(&reread)?;
    let h = targets.as_ref().map(|t| t.h.as_slice());
    let checks = config
        .schemes
        .iter()
        .map(|s| {
            let back = read_estimates(&estimates_path(out, s.tag()), 0, &reread)?;
            Ok(ConstraintCheck::compute(s.tag().to_string(), &back, &constraint, h))
        })
        .collect::<Result<Vec<_>>>()?;
    write_constraint_report(
        &out.join("constraints_report.txt"),
        &format!("target p = {}", num(constraint.target)),
        &checks,
    )
}

/// Area estimates per scheme tag from a previous run's `estimates_<tag>.csv`.
fn read_reference(dir: &Path, config: &RunConfig) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut map = BTreeMap::new();
    for scheme in &config.schemes {
        let path = estimates_path(dir, scheme.tag());
        let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
        let header = rdr.headers()?.clone();
        let replicated = header.get(0) == Some("replicate");
        let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("{}: no column {name}", path.display()));
        let (cu, cb) = (col("unit_id")?, col("benchmarked")?);
        let mut areas = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.with_context(|| format!("{}: line {}", path.display(), k + 2))?;
            if replicated && &rec[0] != "0" {
                continue;
            }
            if rec[cu].is_empty() {
                areas.push(
                    rec[cb]
                        .parse::<f64>()
                        .with_context(|| format!("{}: line {}: bad number", path.display(), k + 2))?,
                );
            }
        }
        map.insert(scheme.tag().to_string(), areas);
    }
    Ok(map)
}

fn write_truth(path: &Path, reports: &[StudyReport], beta: &[f64], sigma2_u: f64, sigma2_e: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "parameter", "value"])?;
    for r in reports {
        let rep = r.replicate.to_string();
        for (k, b) in beta.iter().enumerate() {
            w.write_record([rep.clone(), format!("beta[{k}]"), num(*b)])?;
        }
        w.write_record([rep.clone(), "sigma2_u".into(), num(sigma2_u)])?;
        w.write_record([rep.clone(), "sigma2_e".into(), num(sigma2_e)])?;
        for (i, area) in r.simulation.dataset.areas().iter().enumerate() {
            w.write_record([rep.clone(), format!("u[{}]", area.area_id), num(r.simulation.u_true[i])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs the simulation study and writes the per-scheme series of every
/// replicate, then re-reads the estimate tables to verify the constraints.
pub fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let out = &config.output_dir;
    create_dir(out)?;
    let spec = desk_spec(&config.sim.params)?;
    let mut options = StudyOptions::new(config.schemes.clone(), config.mcmc);
    options.hyper = config.hyper;
    options.replicates = config.sim.replicates;
    options.zero_correction = config.sim.zero_correction;
    if let Some(dir) = &config.sim.reference {
        options.reference = Some(read_reference(dir, config)?);
    }
    let reports = run_simulation_study(&spec, &options)?;

    write_truth(
        &out.join("truth.csv"),
        &reports,
        &config.sim.params.beta,
        config.sim.params.sigma2_u,
        config.sim.params.sigma2_e,
    )?;
    let mut diagnostics = String::new();
    let mut traces = String::new();
    for r in &reports {
        write_survey_csv(&simulated_data_path(out, r.replicate), &r.simulation.dataset)?;
        let (diag, trace) = diagnostics_text(&r.fit.chains, &r.fit)?;
        diagnostics.push_str(&format!("replicate {}\n{diag}\n", r.replicate));
        let mut lines = trace.lines();
        let header = lines.next().unwrap_or_default();
        if traces.is_empty() {
            traces.push_str(&format!("replicate,{header}\n"));
        }
        for line in lines {
            traces.push_str(&format!("{},{line}\n", r.replicate));
        }
    }
    fs::write(out.join("diagnostics.txt"), diagnostics)?;
    fs::write(out.join("plotdata_trace.csv"), traces)?;

    for &scheme in &config.schemes {
        let mut tables = SchemeTables::create(out, scheme.tag(), true)?;
        for r in &reports {
            let series = r.scheme(scheme).context("scheme missing from study report")?;
            tables.write(
                r.replicate,
                &r.simulation.dataset,
                &r.fit,
                &r.bayes,
                &series.solution,
                Some(&series.difference),
            )?;
        }
        tables.finish()?;
    }

    let mut checks = Vec::new();
    let mut targets = Vec::new();
    for r in &reports {
        let data = read_survey_csv(&simulated_data_path(out, r.replicate))?;
        let mut constraint: ConstraintWeights = constraint_weights_from_survey(&data)?;
        constraint.target = r.fit.constraint.target;
        targets.push(format!("replicate {}: target p = {}", r.replicate, num(constraint.target)));
        for scheme in &config.schemes {
            let back = read_estimates(&estimates_path(out, scheme.tag()), r.replicate, &data)?;
            checks.push(ConstraintCheck::compute(
                format!("replicate {} {}", r.replicate, scheme.tag()),
                &back,
                &constraint,
                None,
            ));
        }
    }
    write_constraint_report(&out.join("constraints_report.txt"), &targets.join("\n"), &checks)
}

/// Compares the closed forms with the oracle on random instances.
pub fn cmd_verify(config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let report = run_verification(&config.verify)?;
    println!("instances: {}", report.instances);
    println!("max deviation, scalar closed form vs oracle:        {:.3e}", report.scalar_deviation);
    println!("max deviation, matrix-weighted closed form vs oracle: {:.3e}", report.multi_deviation);
    println!("max deviation, one-dimensional reduction:          {:.3e}", report.reduction_deviation);
    println!("max constraint residual:                           {:.3e}", report.constraint_residual);
    println!("max deviation: {:.3e}", report.max_deviation());
    if report.passed() {
        return Ok(());
    }
    let dump = report.failures.join("\n\n");
    eprintln!("{dump}");
    if let Some(dir) = out {
        create_dir(dir)?;
        fs::write(dir.join("verify_failures.txt"), &dump)?;
    }
    bail!(
        "{} checks failed over {} instances (tolerance {:e})",
        report.failures.len(),
        report.instances,
        twostage_bench::tolerance::ORACLE
    )
}
