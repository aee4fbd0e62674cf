use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One CSV cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    /// Every parameter consulted, defaults included.
    pub config: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub verdicts: Vec<Verdict>,
    /// Experiment-level values that do not fit the row schema.
    pub summary: BTreeMap<String, Value>,
}

impl RunReport {
    pub fn new(experiment: &str, columns: &[&str]) -> RunReport {
        RunReport {
            metadata: Metadata {
                tool: "fk".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                experiment: experiment.into(),
                config: BTreeMap::new(),
            },
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.into(), pass, detail: detail.into() });
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Decimal with at most 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Num(x) => fmt_num(*x),
        Value::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::Text(s) => s.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Format, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Parse(format!("--format: column 1: expected csv or json, got {other:?}"))),
        }
    }
}

/// Write the report to `path`, or to stdout when `path` is `None`.
pub fn emit(report: &RunReport, path: Option<&Path>, format: Format) -> Result<(), CliError> {
    let body = match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(123456.789012345), "123456.789012");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1e-7 / 3.0), "0.0000000333333333333");
    }

    #[test]
    fn csv_layout() {
        let mut r = RunReport::new("fbar", &["n", "gap", "note"]);
        assert_eq!(r.to_csv(), "n,gap,note\n");
        r.push(vec![10usize.into(), 0.25.into(), "a,b".into()]);
        assert_eq!(r.to_csv(), "n,gap,note\n10,0.25,\"a,b\"\n");
    }

    #[test]
    fn json_round_trip() {
        let mut r = RunReport::new("dmu", &["d_mu", "ok", "k"]);
        r.push(vec![0.1.into(), true.into(), 3usize.into()]);
        r.push(vec![1.0.into(), false.into(), 0usize.into()]);
        r.verdict("v", true, "fine");
        r.note("e_phi", 0.5);
        r.metadata.config.insert("seed".into(), "7".into());
        let back: RunReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
