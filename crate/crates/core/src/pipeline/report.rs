//! Aggregates stage outputs into one bundle. Nothing is computed here beyond
//! copying values out of stage files and rounding them for display.

use std::path::Path;

use serde_json::{Map, Value};

use super::PipelineError;
use crate::stats::sig6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
        }
    }
}

const SECTIONS: [(&str, &str); 8] = [
    ("ingest", "ingest.json"),
    ("clustering", "cluster_report.json"),
    ("smap_summary", "smap_summary.json"),
    ("smap_selection", "cv.json"),
    ("recovery", "recovery.json"),
    ("episodes", "episode_stats.json"),
    ("overlap", "overlap_summary.json"),
    ("hypotheses", "panel_fits.json"),
];

/// Rounds every non-integer number to six significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            if let Some(x) = n.as_f64() {
                let rounded: f64 = sig6(x).parse().unwrap_or(x);
                if let Some(r) = serde_json::Number::from_f64(rounded) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// `(dotted path, value)` rows; floats in six significant digits.
pub fn flatten_report(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(o) => o.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::Number(n) if !(n.is_i64() || n.is_u64()) => out.push((prefix.to_string(), sig6(n.as_f64().unwrap_or(f64::NAN)))),
            Value::Null => out.push((prefix.to_string(), String::new())),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out
}

/// Keeps the selected cell of each cross-validation report, not its whole grid.
fn selections(cv: Value) -> Value {
    let Value::Array(reports) = cv else { return cv };
    Value::Array(
        reports
            .into_iter()
            .map(|mut r| {
                if let Value::Object(o) = &mut r {
                    o.remove("grid");
                }
                r
            })
            .collect(),
    )
}

/// Collects the section files present in `dir` into `report.json` and `report.csv`.
pub fn build(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut report = Map::new();
    for (section, file) in SECTIONS {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        let bytes = std::fs::read(&path).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
        let mut v: Value =
            serde_json::from_slice(&bytes).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
        if section == "smap_selection" {
            v = selections(v);
        }
        round_floats(&mut v);
        report.insert(section.to_string(), v);
    }
    let report = Value::Object(report);
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let json_path = dir.join(ReportFormat::Json.file_name());
    std::fs::write(&json_path, json).map_err(|e| PipelineError::Other(format!("{}: {e}", json_path.display())))?;

    let csv_path = dir.join(ReportFormat::Csv.file_name());
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(|e| PipelineError::Other(format!("{}: {e}", csv_path.display())))?;
    let io = |e: csv::Error| PipelineError::Other(format!("{}: {e}", csv_path.display()));
    wtr.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in flatten_report(&report) {
        wtr.write_record([k, v]).map_err(io)?;
    }
    wtr.flush().map_err(|e| PipelineError::Other(format!("{}: {e}", csv_path.display())))?;
    Ok(vec![ReportFormat::Json.file_name().into(), ReportFormat::Csv.file_name().into()])
}
