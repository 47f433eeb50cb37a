//! Report envelope and the JSON / CSV emitters.

use serde_json::{json, Map, Value};

use liftlab::exact::round12;

use crate::args::Format;

pub const SCHEMA_VERSION: &str = "1";

/// Rows for the CSV view of a command.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// What a command hands back before the envelope is added.
#[derive(Debug)]
pub struct Outcome {
    pub instance: Value,
    pub result: Value,
    pub warnings: Vec<String>,
    /// False when an assertion or verdict failed (exit 1).
    pub passed: bool,
    pub table: Option<Table>,
}

pub fn real(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        json!(x.to_string())
    }
}

pub fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// Every float in `v` rounded to twelve significant digits.
fn round_reals(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => *v = real(n.as_f64().unwrap_or_default()),
        Value::Array(a) => a.iter_mut().for_each(round_reals),
        Value::Object(m) => m.values_mut().for_each(round_reals),
        _ => {}
    }
}

/// The full report. `serde_json` maps are ordered, so keys come out sorted.
pub fn envelope(command: &[String], outcome: &Outcome, seconds: Option<f64>) -> Value {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("instance".into(), outcome.instance.clone());
    m.insert("result".into(), outcome.result.clone());
    m.insert("passed".into(), json!(outcome.passed));
    m.insert("warnings".into(), json!(outcome.warnings));
    if let Some(s) = seconds {
        m.insert("timing".into(), json!({ "seconds": real(s) }));
    }
    let mut v = Value::Object(m);
    round_reals(&mut v);
    v
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// `path,value` pairs for every leaf, in key order.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, v, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, v) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), v, out);
            }
        }
        leaf => out.push(vec![prefix.to_string(), cell(leaf)]),
    }
}

pub fn emit(report: &Value, outcome: &Outcome, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            match &outcome.table {
                Some(t) => {
                    w.write_record(&t.header).unwrap();
                    for r in &t.rows {
                        w.write_record(r).unwrap();
                    }
                }
                None => {
                    let mut rows = Vec::new();
                    flatten("", report, &mut rows);
                    w.write_record(["key", "value"]).unwrap();
                    for r in rows {
                        w.write_record(&r).unwrap();
                    }
                }
            }
            w.into_inner().expect("in-memory csv")
        }
    }
}
