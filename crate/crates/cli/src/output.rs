//! Output tables and the read-back constraint check.
//!
//! Every number is printed with 12 significant digits, enough for the
//! constraints to hold to 1e-10 when the tables are read back.

use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use twostage_bench::tolerance;
use twostage_bench::{BenchmarkSolution, ConstraintWeights, SurveyDataset};

pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV file with a fixed header; rows may carry a leading replicate column.
pub struct Table {
    w: csv::Writer<File>,
    replicated: bool,
}

impl Table {
    pub fn create(path: &Path, replicated: bool, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        let mut full: Vec<&str> = Vec::with_capacity(header.len() + 1);
        if replicated {
            full.push("replicate");
        }
        full.extend_from_slice(header);
        w.write_record(&full)?;
        Ok(Self { w, replicated })
    }

    pub fn row(&mut self, replicate: usize, fields: Vec<String>) -> Result<()> {
        if self.replicated {
            let mut full = Vec::with_capacity(fields.len() + 1);
            full.push(replicate.to_string());
            full.extend(fields);
            self.w.write_record(&full)?;
        } else {
            self.w.write_record(&fields)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub const ESTIMATE_HEADER: &[&str] = &["area_id", "unit_id", "n_i", "bayes", "benchmarked", "pmse", "pct_prmse"];

/// Per-unit and per-area rows of one scheme. Each area's unit rows are
/// followed by its area row, whose `unit_id` is empty.
pub struct EstimateRows<'a> {
    pub data: &'a SurveyDataset,
    pub bayes: &'a BenchmarkSolution,
    pub solution: &'a BenchmarkSolution,
    pub unit_pct: &'a [Vec<Option<f64>>],
    pub area_pct: &'a [Option<f64>],
}

impl EstimateRows<'_> {
    pub fn write(&self, table: &mut Table, replicate: usize) -> Result<()> {
        let unit_pmse = self.solution.unit_pmse.as_ref().ok_or_else(|| anyhow!("missing unit PMSE"))?;
        let area_pmse = self.solution.area_pmse.as_ref().ok_or_else(|| anyhow!("missing area PMSE"))?;
        for (i, area) in self.data.areas().iter().enumerate() {
            let n = area.units.len().to_string();
            for (j, unit) in area.units.iter().enumerate() {
                table.row(
                    replicate,
                    vec![
                        area.area_id.clone(),
                        unit.unit_id.clone(),
                        n.clone(),
                        num(self.bayes.unit_estimates[i][j]),
                        num(self.solution.unit_estimates[i][j]),
                        num(unit_pmse[i][j]),
                        opt_num(self.unit_pct[i][j]),
                    ],
                )?;
            }
            table.row(
                replicate,
                vec![
                    area.area_id.clone(),
                    String::new(),
                    n,
                    num(self.bayes.area_estimates[i]),
                    num(self.solution.area_estimates[i]),
                    num(area_pmse[i]),
                    opt_num(self.area_pct[i]),
                ],
            )?;
        }
        Ok(())
    }
}

/// Benchmarked values of one estimate table, read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadBack {
    pub units: Vec<Vec<f64>>,
    pub areas: Vec<f64>,
}

/// Reads the benchmarked column of `path` for `replicate` (ignored for
/// tables without a replicate column), checking that rows line up with `data`.
pub fn read_estimates(path: &Path, replicate: usize, data: &SurveyDataset) -> Result<ReadBack> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let offset = usize::from(header.get(0) == Some("replicate"));
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: no column '{name}'", path.display()))
    };
    let (ci, cu, cb) = (col("area_id")?, col("unit_id")?, col("benchmarked")?);
    let mut units: Vec<Vec<f64>> = vec![Vec::new(); data.num_areas()];
    let mut areas: Vec<Option<f64>> = vec![None; data.num_areas()];
    let index: std::collections::HashMap<&str, usize> = data
        .areas()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.area_id.as_str(), i))
        .collect();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", path.display()))?;
        if offset == 1 && rec[0].parse::<usize>().ok() != Some(replicate) {
            continue;
        }
        let i = *index
            .get(&rec[ci])
            .ok_or_else(|| anyhow!("{}: line {line}: unknown area '{}'", path.display(), &rec[ci]))?;
        let value: f64 = rec[cb]
            .parse()
            .map_err(|_| anyhow!("{}: line {line}: bad number '{}'", path.display(), &rec[cb]))?;
        if rec[cu].is_empty() {
            areas[i] = Some(value);
        } else {
            let expected = data.areas()[i].units.get(units[i].len()).map(|u| u.unit_id.as_str());
            if expected != Some(&rec[cu]) {
                bail!("{}: line {line}: unit '{}' out of order", path.display(), &rec[cu]);
            }
            units[i].push(value);
        }
    }
    for (i, area) in data.areas().iter().enumerate() {
        if units[i].len() != area.units.len() || areas[i].is_none() {
            bail!("{}: rows for area '{}' are incomplete", path.display(), area.area_id);
        }
    }
    Ok(ReadBack {
        units,
        areas: areas.into_iter().map(|a| a.expect("checked")).collect(),
    })
}

/// Residuals of the read-back tables against freshly computed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub label: String,
    pub unit_to_area: f64,
    pub area_to_target: f64,
    /// `max_i |sum_j w_ij (t_ij - d_i)^2 - h_i|` when targets apply.
    pub spread: Option<f64>,
}

impl ConstraintCheck {
    pub fn compute(label: String, back: &ReadBack, constraint: &ConstraintWeights, h: Option<&[f64]>) -> Self {
        let solution = BenchmarkSolution {
            unit_estimates: back.units.clone(),
            area_estimates: back.areas.clone(),
            unit_pmse: None,
            area_pmse: None,
            scheme_tag: String::new(),
        };
        let r = solution.residuals(constraint);
        let spread = h.map(|h| {
            back.units
                .iter()
                .zip(&back.areas)
                .zip(&constraint.unit_weights)
                .zip(h)
                .map(|(((t, d), w), h)| {
                    let s: f64 = t.iter().zip(w).map(|(t, w)| w * (t - d).powi(2)).sum();
                    (s - h).abs()
                })
                .fold(0.0, f64::max)
        });
        Self {
            label,
            unit_to_area: r.unit_to_area,
            area_to_target: r.area_to_target,
            spread,
        }
    }

    pub fn passed(&self) -> bool {
        self.unit_to_area <= tolerance::CONSTRAINT
            && self.area_to_target <= tolerance::CONSTRAINT
            && self.spread.is_none_or(|s| s <= tolerance::CONSTRAINT)
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "{}: max|sum_j w_ij t_ij - d_i| = {:.3e}  |sum_i eta_i d_i - p| = {:.3e}",
            self.label, self.unit_to_area, self.area_to_target
        );
        if let Some(v) = self.spread {
            s.push_str(&format!("  max|spread_i - h_i| = {v:.3e}"));
        }
        s.push_str(if self.passed() { "  ok" } else { "  FAILED" });
        s
    }
}

/// Writes the constraint report and fails if any check failed.
pub fn write_constraint_report(path: &Path, target: &str, checks: &[ConstraintCheck]) -> Result<()> {
    let mut text = format!(
        "constraint check of tables read back from disk (tolerance {:e})\n{target}\n",
        tolerance::CONSTRAINT
    );
    for c in checks {
        text.push_str(&c.line());
        text.push('\n');
    }
    std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    if let Some(bad) = checks.iter().find(|c| !c.passed()) {
        bail!("constraint verification failed: {}", bad.line());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits_round_trip_closely() {
        for x in [0.123456789012345, 1.0 / 3.0, 0.0, -2.5e-7, 12345.678901234] {
            let back: f64 = num(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-12 * x.abs().max(1e-300));
        }
        assert_eq!(num(0.25), "2.50000000000e-1");
        assert_eq!(opt_num(None), "");
    }
}
