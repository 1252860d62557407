//! JSON and CSV input/output.
//!
//! Floats in CSV are written with `{:.16e}` (17 significant digits); JSON
//! uses the shortest representation that parses back to the same `f64`.
//! Both round-trip exactly.

use crate::error::{CliError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::path::Path;

/// Parse `arg` as JSON: inline when it starts with `{` or `[`, otherwise a
/// file path.
pub fn load_json<T: DeserializeOwned>(arg: &str) -> Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        parse_json(arg, "<inline>")
    } else {
        let text = fs::read_to_string(arg).map_err(|e| CliError::io(arg, e))?;
        parse_json(&text, arg)
    }
}

pub fn parse_json<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Json {
        source_name: source_name.to_string(),
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })
}

// serde_json appends " at line L column C", which the caller reports itself
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values serialize");
    out.push(b'\n');
    out
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<String>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    /// One column per field of the serialized rows; nested values become
    /// compact JSON cells.
    pub fn from_rows<T: Serialize>(name: impl Into<String>, rows: &[T]) -> Self {
        let values: Vec<Value> = rows.iter().map(to_value).collect();
        let header: Vec<String> = match values.first() {
            Some(Value::Object(m)) => m.keys().cloned().collect(),
            _ => vec!["value".into()],
        };
        let rows = values
            .into_iter()
            .map(|v| match v {
                Value::Object(m) => m.into_iter().map(|(_, v)| v).collect(),
                other => vec![other],
            })
            .collect();
        Self { name: name.into(), header, rows }
    }

    /// `field,value` rows for every leaf of a JSON document, keys joined
    /// with dots and array positions as indices.
    pub fn flatten(name: impl Into<String>, v: &Value) -> Self {
        let mut t = Self::new(name, vec!["field".into(), "value".into()]);
        flatten_into("", v, &mut t.rows);
        t
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Csv(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell)).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Csv(e.to_string()))
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<Vec<Value>>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten_into(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten_into(&key(&i.to_string()), v, out)),
        leaf => out.push(vec![Value::String(prefix.to_string()), leaf.clone()]),
    }
}

/// CSV cell text: integers verbatim, floats with 17 significant digits.
pub fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else if let Some(u) = n.as_u64() {
                u.to_string()
            } else {
                format!("{:.16e}", n.as_f64().expect("finite JSON number"))
            }
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Sample table with header `x_1_1, …, x_k_d` (block, coordinate).
pub fn sample_table(name: &str, k: usize, d: usize, samples: &[Vec<f64>]) -> Table {
    let header = (1..=k).flat_map(|m| (1..=d).map(move |i| format!("x_{m}_{i}"))).collect();
    let mut t = Table::new(name, header);
    t.rows = samples.iter().map(|r| r.iter().map(|&x| Value::from(x)).collect()).collect();
    t
}

/// Observations for MLE: a JSON array of rows, or CSV with a header line.
pub fn read_observations(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return parse_json(&text, &path.display().to_string());
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Csv(format!("{}: record {}: {e}", path.display(), line + 1)))?;
        out.push(row);
    }
    Ok(out)
}
