//! Reading survey data and auxiliary CSV inputs.
//!
//! Survey CSV: header `area_id,unit_id,y,weight,x1,...,xk`. Units of an area
//! need not be contiguous; areas keep the order of their first appearance and
//! units their file order. An intercept is added by the model, so `x1..xk`
//! are the covariates proper.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use twostage_bench::{AreaBlock, SurveyDataset, UnitRecord};

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn read_survey_csv(path: &Path) -> Result<SurveyDataset> {
    parse_survey(open(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn parse_survey(reader: impl Read) -> Result<SurveyDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().context("line 1: unreadable header")?.clone();
    let expected = ["area_id", "unit_id", "y", "weight"];
    if header.len() < 5 || header.iter().take(4).ne(expected) {
        bail!("line 1: header must be area_id,unit_id,y,weight,x1,...,xk (at least one covariate)");
    }
    let k = header.len() - 4;

    let mut order: Vec<String> = Vec::new();
    let mut areas: HashMap<String, Vec<UnitRecord>> = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let fallback = idx + 2;
        let record = record.map_err(|e| {
            let line = e.position().map_or(fallback as u64, |p| p.line());
            anyhow!("line {line}: {e}")
        })?;
        let line = record.position().map_or(fallback as u64, |p| p.line());
        if record.len() != header.len() {
            bail!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            );
        }
        let area_id = record[0].to_string();
        let unit_id = record[1].to_string();
        if area_id.is_empty() || unit_id.is_empty() {
            bail!("line {line}: area_id and unit_id must be nonempty");
        }
        let response = match &record[2] {
            "0" => false,
            "1" => true,
            other => bail!("line {line}: y must be 0 or 1, got '{other}'"),
        };
        let weight: f64 = record[3]
            .parse()
            .map_err(|_| anyhow!("line {line}: weight '{}' is not a number", &record[3]))?;
        if !(weight > 0.0 && weight.is_finite()) {
            bail!("line {line}: weight must be positive, got {weight}");
        }
        let covariates = (0..k)
            .map(|c| {
                let v = &record[4 + c];
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| anyhow!("line {line}: {} = '{v}' is not a finite number", &header[4 + c]))
            })
            .collect::<Result<Vec<f64>>>()?;
        let units = areas.entry(area_id.clone()).or_insert_with(|| {
            order.push(area_id.clone());
            Vec::new()
        });
        if units.iter().any(|u| u.unit_id == unit_id) {
            bail!("line {line}: duplicate unit_id '{unit_id}' in area '{area_id}'");
        }
        units.push(UnitRecord {
            unit_id,
            response,
            survey_weight: weight,
            covariates,
        });
    }
    if order.is_empty() {
        bail!("no data rows");
    }
    let blocks = order
        .into_iter()
        .map(|id| AreaBlock {
            units: areas.remove(&id).expect("area recorded"),
            area_id: id,
        })
        .collect();
    Ok(SurveyDataset::new(blocks)?)
}

/// Writes `data` in the survey CSV format (covariates named `x1..xk`).
pub fn write_survey_csv(path: &Path, data: &SurveyDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["area_id".to_string(), "unit_id".into(), "y".into(), "weight".into()];
    header.extend((1..=data.num_covariates()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for area in data.areas() {
        for u in &area.units {
            let mut row = vec![
                area.area_id.clone(),
                u.unit_id.clone(),
                u8::from(u.response).to_string(),
                u.survey_weight.to_string(),
            ];
            row.extend(u.covariates.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Variability targets from a CSV `area_id,h`, ordered like `area_ids`.
pub fn read_h_targets(path: &Path, area_ids: &[String]) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = rdr.headers()?.clone();
    if header.iter().ne(["area_id", "h"]) {
        bail!("{}: line 1: header must be area_id,h", path.display());
    }
    let mut by_area = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.with_context(|| format!("{}: line {line}", path.display()))?;
        let h: f64 = record[1]
            .parse()
            .map_err(|_| anyhow!("{}: line {line}: h '{}' is not a number", path.display(), &record[1]))?;
        if by_area.insert(record[0].to_string(), h).is_some() {
            bail!("{}: line {line}: area '{}' repeated", path.display(), &record[0]);
        }
    }
    area_ids
        .iter()
        .map(|id| {
            by_area
                .get(id)
                .copied()
                .ok_or_else(|| anyhow!("{}: no target for area '{id}'", path.display()))
        })
        .collect()
}
