//! Long-format CSV ingestion and per-unit / summary output.
//!
//! Input has a header with columns `unit` and `value`, plus an optional
//! `group`. A missing or constant group column means a one-sample design;
//! groups `x` and `y` mean a two-sample design.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::construct::{Dataset, TwoSampleUnit, UnitObservations};
use crate::error::{Error, Result};
use crate::methods::{Analysis, RepeatSummary};

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => parse_err(pos.line(), e.to_string()),
        None => Error::Csv(e),
    }
}

struct Row {
    line: u64,
    unit: String,
    group: String,
    value: f64,
}

pub fn read_long_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(unit_col), Some(value_col)) = (col("unit"), col("value")) else {
        return Err(parse_err(1, "header must name the columns unit and value"));
    };
    let group_col = col("group");

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let unit = record.get(unit_col).unwrap_or("");
        if unit.is_empty() {
            return Err(parse_err(line, "empty unit id"));
        }
        let raw = record.get(value_col).unwrap_or("");
        let value: f64 = raw
            .parse()
            .map_err(|_| parse_err(line, format!("value {raw:?} is not a number")))?;
        if !value.is_finite() {
            return Err(parse_err(line, format!("value {raw:?} is not finite")));
        }
        let group = group_col.and_then(|g| record.get(g)).unwrap_or("").to_owned();
        rows.push(Row {
            line,
            unit: unit.to_owned(),
            group,
            value,
        });
    }
    let Some(first) = rows.first() else {
        return Err(parse_err(1, "no observations"));
    };

    let constant = rows.iter().all(|r| r.group == first.group);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut slot = |unit: &str| {
        *index.entry(unit.to_owned()).or_insert_with(|| {
            ids.push(unit.to_owned());
            ids.len() - 1
        })
    };

    if constant {
        let mut values: Vec<Vec<f64>> = Vec::new();
        for r in &rows {
            let k = slot(&r.unit);
            if k == values.len() {
                values.push(Vec::new());
            }
            values[k].push(r.value);
        }
        let units = ids.into_iter().zip(values).map(|(id, v)| UnitObservations::new(id, v));
        return Ok(Dataset::OneSample(units.collect()));
    }

    let mut xy: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for r in &rows {
        let k = slot(&r.unit);
        if k == xy.len() {
            xy.push((Vec::new(), Vec::new()));
        }
        match r.group.as_str() {
            "x" => xy[k].0.push(r.value),
            "y" => xy[k].1.push(r.value),
            g => {
                return Err(parse_err(
                    r.line,
                    format!("group {g:?}: two-sample groups must be x or y"),
                ))
            }
        }
    }
    let units = ids.into_iter().zip(xy).map(|(id, (x, y))| TwoSampleUnit::new(id, x, y));
    Ok(Dataset::TwoSample(units.collect()))
}

pub fn read_long_csv_path(path: &Path) -> Result<Dataset> {
    read_long_csv(File::open(path)?)
}

/// Writes one row per unit: `unit`, the analysis columns, an optional
/// `rejection_frequency` and `rejected` (0/1).
pub fn write_unit_csv<W: Write>(
    writer: W,
    ids: &[&str],
    analysis: &Analysis,
    frequency: Option<&[f64]>,
) -> Result<()> {
    let m = ids.len();
    if analysis.columns.iter().any(|(_, c)| c.len() != m)
        || frequency.is_some_and(|f| f.len() != m)
    {
        return Err(Error::ShapeMismatch("per-unit columns differ in length".into()));
    }
    let mut rejected = vec![false; m];
    for &i in &analysis.rejected {
        rejected[i] = true;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit"];
    header.extend(analysis.columns.iter().map(|(n, _)| *n));
    if frequency.is_some() {
        header.push("rejection_frequency");
    }
    header.push("rejected");
    w.write_record(&header)?;
    for i in 0..m {
        let mut row = vec![ids[i].to_owned()];
        row.extend(analysis.columns.iter().map(|(_, c)| c[i].to_string()));
        if let Some(f) = frequency {
            row.push(f[i].to_string());
        }
        row.push(if rejected[i] { "1" } else { "0" }.to_owned());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSection {
    pub method: String,
    pub design: String,
    pub units: usize,
    pub seed: u64,
}

/// Echo of the options that shaped the run.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigSection {
    pub alpha: f64,
    pub null_estimator: String,
    pub jc_gamma: f64,
    pub bias_correct: bool,
    pub antisym: String,
    pub derand_n: usize,
    pub derand_alpha_frac: f64,
    pub sfbh_b: usize,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub rejections: usize,
    pub degenerate_units: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_rejections: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatSection {
    pub count: usize,
    pub mean_discoveries: f64,
    pub sd_discoveries: f64,
}

/// Run summary, rendered as TOML.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run: RunSection,
    pub config: ConfigSection,
    pub result: ResultSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<RepeatSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Note>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Note {
    pub key: String,
    pub value: String,
}

impl RunSummary {
    pub fn new(
        run: RunSection,
        config: ConfigSection,
        analysis: &Analysis,
        repeats: Option<&RepeatSummary>,
    ) -> Self {
        Self {
            run,
            config,
            result: ResultSection {
                tau: analysis.tau,
                rejections: analysis.rejected.len(),
                degenerate_units: analysis.degenerate,
                run_rejections: analysis.run_rejections.clone(),
            },
            repeats: repeats.map(|r| RepeatSection {
                count: r.counts.len(),
                mean_discoveries: r.mean_discoveries(),
                sd_discoveries: r.sd_discoveries(),
            }),
            notes: analysis
                .notes
                .iter()
                .map(|(k, v)| Note {
                    key: (*k).to_owned(),
                    value: v.clone(),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("summary serialization: {e}")))
    }
}
