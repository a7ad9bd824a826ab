//! Sweep result tables and their byte-stable CSV/JSON renderings.
//!
//! `results.csv` is the canonical cross-tool output: one line per
//! (row, noise level). `summary.json` mirrors it per row so the CSV can
//! be rebuilt from the summary alone. Both files are byte-identical for
//! identical inputs: floats go through [`format_sig`], lines end in '\n'.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::noise::NoiseSweepResult;

pub const CSV_HEADER: &str = "model,dataset,learning_rate,optimizer,seed,eta_percent,\
                              trials,baseline_acc,mean_acc,std_acc,normalized_acc";

/// One noise level of a sweep row, reduced to reportable statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPoint {
    pub eta: f64,
    pub trials: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
}

/// One swept configuration: a model/dataset pair evaluated at a fixed
/// learning rate and optimizer, with its full noise response curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: String,
    pub dataset: String,
    pub learning_rate: f64,
    pub optimizer: String,
    pub seed: u64,
    pub baseline_acc: f64,
    pub points: Vec<RowPoint>,
    /// mean_acc of each point divided by the baseline; parallel to `points`.
    pub normalized: Vec<f64>,
    pub avg_normalized: Option<f64>,
}

impl SweepRow {
    pub fn from_sweep(
        model: impl Into<String>,
        dataset: impl Into<String>,
        learning_rate: f64,
        optimizer: impl Into<String>,
        seed: u64,
        sweep: &NoiseSweepResult,
    ) -> Self {
        let points = sweep
            .points
            .iter()
            .map(|p| RowPoint {
                eta: p.eta,
                trials: p.per_trial_acc.len(),
                mean_acc: p.mean_acc,
                std_acc: p.std_acc,
            })
            .collect();
        SweepRow {
            model: model.into(),
            dataset: dataset.into(),
            learning_rate,
            optimizer: optimizer.into(),
            seed,
            baseline_acc: sweep.baseline_acc,
            points,
            normalized: sweep.normalized.clone(),
            avg_normalized: sweep.avg_normalized,
        }
    }

    fn check(&self) -> Result<()> {
        for label in [&self.model, &self.dataset, &self.optimizer] {
            if label.contains(',') || label.contains('\n') {
                return Err(Error::Report(format!("label {label:?} would corrupt the csv")));
            }
        }
        if self.points.is_empty() {
            return Err(Error::Report(format!("row {} holds no noise levels", self.model)));
        }
        if self.points.len() != self.normalized.len() {
            return Err(Error::Report(format!(
                "row {}: {} points but {} normalized entries",
                self.model,
                self.points.len(),
                self.normalized.len()
            )));
        }
        let mut values = vec![self.learning_rate, self.baseline_acc];
        values.extend(self.normalized.iter().copied());
        values.extend(self.avg_normalized);
        for p in &self.points {
            values.extend([p.eta, p.mean_acc, p.std_acc]);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Report(format!("row {} holds non-finite value {bad}", self.model)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// One parsed line of results.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub model: String,
    pub dataset: String,
    pub learning_rate: f64,
    pub optimizer: String,
    pub seed: u64,
    pub eta_percent: f64,
    pub trials: usize,
    pub baseline_acc: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub normalized_acc: f64,
}

/// Formats to 6 significant digits with '.' as the decimal separator and
/// no trailing zeros, so equal values always render to equal bytes.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" { "0".to_string() } else { s }
}

fn sig_value(x: f64) -> Result<Value> {
    let rounded: f64 = format_sig(x)
        .parse()
        .map_err(|_| Error::Report(format!("cannot round {x} for the summary")))?;
    Number::from_f64(rounded)
        .map(Value::Number)
        .ok_or_else(|| Error::Report(format!("non-finite value {x} in report")))
}

/// Writes `results.csv` and `summary.json` under `dir`, creating it if
/// needed. Returns the two paths. Rejects empty or malformed reports so
/// a sweep never quietly drops its output.
pub fn emit_report(report: &SweepReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if report.rows.is_empty() {
        return Err(Error::Report("refusing to emit an empty report".to_string()));
    }
    for row in &report.rows {
        row.check()?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("summary.json");
    fs::write(&csv_path, render_csv(report)).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&json_path, render_summary(report)?).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

fn render_csv(report: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        for (point, normalized) in row.points.iter().zip(&row.normalized) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                row.model,
                row.dataset,
                format_sig(row.learning_rate),
                row.optimizer,
                row.seed,
                format_sig(point.eta * 100.0),
                point.trials,
                format_sig(row.baseline_acc),
                format_sig(point.mean_acc),
                format_sig(point.std_acc),
                format_sig(*normalized),
            ));
        }
    }
    out
}

fn render_summary(report: &SweepReport) -> Result<String> {
    let mut rows = Vec::with_capacity(report.rows.len());
    for row in &report.rows {
        let mut points = Vec::with_capacity(row.points.len());
        for (point, normalized) in row.points.iter().zip(&row.normalized) {
            let mut o = Map::new();
            o.insert("eta_percent".to_string(), sig_value(point.eta * 100.0)?);
            o.insert("trials".to_string(), Value::from(point.trials));
            o.insert("mean_acc".to_string(), sig_value(point.mean_acc)?);
            o.insert("std_acc".to_string(), sig_value(point.std_acc)?);
            o.insert("normalized_acc".to_string(), sig_value(*normalized)?);
            points.push(Value::Object(o));
        }
        let avg = match row.avg_normalized {
            Some(a) => sig_value(a)?,
            None => Value::Null,
        };
        let mut o = Map::new();
        o.insert("model".to_string(), Value::from(row.model.clone()));
        o.insert("dataset".to_string(), Value::from(row.dataset.clone()));
        o.insert("learning_rate".to_string(), sig_value(row.learning_rate)?);
        o.insert("optimizer".to_string(), Value::from(row.optimizer.clone()));
        o.insert("seed".to_string(), Value::from(row.seed));
        o.insert("baseline_acc".to_string(), sig_value(row.baseline_acc)?);
        o.insert("points".to_string(), Value::Array(points));
        o.insert("avg_normalized_acc".to_string(), avg);
        rows.push(Value::Object(o));
    }
    let mut text = serde_json::to_string_pretty(&Value::Array(rows))?;
    text.push('\n');
    Ok(text)
}

/// Parses a results.csv produced by [`emit_report`].
pub fn parse_results_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Report(format!("unexpected csv header {header:?}")));
        }
        None => return Err(Error::Report("csv file is empty".to_string())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Report(format!(
                "line {}: expected 11 fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        let number = |pos: usize, name: &str| -> Result<f64> {
            fields[pos]
                .parse()
                .map_err(|_| Error::Report(format!("line {}: bad {name} {:?}", idx + 1, fields[pos])))
        };
        records.push(CsvRecord {
            model: fields[0].to_string(),
            dataset: fields[1].to_string(),
            learning_rate: number(2, "learning_rate")?,
            optimizer: fields[3].to_string(),
            seed: fields[4]
                .parse()
                .map_err(|_| Error::Report(format!("line {}: bad seed {:?}", idx + 1, fields[4])))?,
            eta_percent: number(5, "eta_percent")?,
            trials: fields[6]
                .parse()
                .map_err(|_| Error::Report(format!("line {}: bad trials {:?}", idx + 1, fields[6])))?,
            baseline_acc: number(7, "baseline_acc")?,
            mean_acc: number(8, "mean_acc")?,
            std_acc: number(9, "std_acc")?,
            normalized_acc: number(10, "normalized_acc")?,
        });
    }
    Ok(records)
}

/// Rebuilds a report from a summary.json written by [`emit_report`], so
/// results.csv can be regenerated without re-running any experiment.
pub fn load_summary(path: &Path) -> Result<SweepReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let rows_json = value
        .as_array()
        .ok_or_else(|| Error::Report("summary root is not an array".to_string()))?;
    let mut rows = Vec::with_capacity(rows_json.len());
    for row_json in rows_json {
        let o = row_json
            .as_object()
            .ok_or_else(|| Error::Report("summary row is not an object".to_string()))?;
        let get = |key: &str| -> Result<&Value> {
            o.get(key).ok_or_else(|| Error::Report(format!("summary row is missing {key:?}")))
        };
        let text_of = |key: &str| -> Result<String> {
            get(key)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Report(format!("summary field {key:?} is not a string")))
        };
        let mut points = Vec::new();
        let mut normalized = Vec::new();
        for point_json in get("points")?
            .as_array()
            .ok_or_else(|| Error::Report("summary points is not an array".to_string()))?
        {
            let p = point_json
                .as_object()
                .ok_or_else(|| Error::Report("summary point is not an object".to_string()))?;
            let num = |key: &str| -> Result<f64> {
                p.get(key)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Report(format!("summary point lacks number {key:?}")))
            };
            points.push(RowPoint {
                eta: num("eta_percent")? / 100.0,
                trials: num("trials")? as usize,
                mean_acc: num("mean_acc")?,
                std_acc: num("std_acc")?,
            });
            normalized.push(num("normalized_acc")?);
        }
        let avg_normalized = match get("avg_normalized_acc")? {
            Value::Null => None,
            v => Some(v.as_f64().ok_or_else(|| {
                Error::Report("summary avg_normalized_acc is not a number".to_string())
            })?),
        };
        let row = SweepRow {
            model: text_of("model")?,
            dataset: text_of("dataset")?,
            learning_rate: get("learning_rate")?
                .as_f64()
                .ok_or_else(|| Error::Report("summary learning_rate is not a number".to_string()))?,
            optimizer: text_of("optimizer")?,
            seed: get("seed")?
                .as_u64()
                .ok_or_else(|| Error::Report("summary seed is not an integer".to_string()))?,
            baseline_acc: get("baseline_acc")?
                .as_f64()
                .ok_or_else(|| Error::Report("summary baseline_acc is not a number".to_string()))?,
            points,
            normalized,
            avg_normalized,
        };
        row.check()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Report("summary holds no rows".to_string()));
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests;
