//! Run records: per-trial tables plus summary scalars, with deterministic
//! CSV and JSON emission.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::io;

/// One cell of a run table.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl FieldValue {
    /// CSV token. Floats use the 17-significant-digit scientific form so
    /// they round-trip exactly; text is quoted only when it contains a
    /// delimiter, quote, or line break.
    pub fn csv_token(&self) -> String {
        match self {
            FieldValue::Float(v) => io::format_float(*v),
            FieldValue::Int(v) => v.to_string(),
            FieldValue::Bool(v) => v.to_string(),
            FieldValue::Text(s) => {
                if s.contains([',', '"', '\n', '\r']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    /// JSON form. Non-finite floats have no JSON number representation and
    /// come out as the strings "NaN", "inf", "-inf".
    pub fn to_json_value(&self) -> Value {
        match self {
            FieldValue::Float(v) => {
                if v.is_finite() {
                    Value::from(*v)
                } else {
                    Value::from(io::format_float(*v))
                }
            }
            FieldValue::Int(v) => Value::from(*v),
            FieldValue::Bool(v) => Value::from(*v),
            FieldValue::Text(s) => Value::from(s.as_str()),
        }
    }
}

/// Serialize a JSON value with object keys sorted, floats in the same
/// 17-significant-digit form as the CSV cells, and no whitespace. Equal
/// values always produce equal byte strings, whatever the key order of the
/// source document was.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("JSON number is i64, u64, or f64");
                out.push_str(&io::format_float(f));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"))
        }
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (k, key) in keys.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings always serialize"));
                out.push(':');
                write_canonical(&map[key.as_str()], out);
            }
            out.push('}');
        }
    }
}

/// Output format selector for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown output format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// Full result of one experiment run: identification fields, a per-trial
/// table, and summary scalars each of which is recomputable from the table.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub library_version: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<FieldValue>>,
    pub summary: BTreeMap<String, FieldValue>,
    /// Measured duration, reported on the console only; the emitted
    /// artifacts depend on (config, seed) alone.
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn new(
        experiment: impl Into<String>,
        config_hash: impl Into<String>,
        columns: Vec<String>,
    ) -> Self {
        RunRecord {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            columns,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn push_row(&mut self, row: Vec<FieldValue>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "row has {} fields for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn set_summary(&mut self, key: impl Into<String>, value: FieldValue) {
        self.summary.insert(key.into(), value);
    }

    /// Whether the run's acceptance condition held, when one was recorded
    /// under the "assert_ok" summary key.
    pub fn assert_ok(&self) -> Option<bool> {
        match self.summary.get("assert_ok") {
            Some(FieldValue::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    /// Per-trial table as CSV: comma separated, UTF-8, LF line endings,
    /// header row first. An empty record emits the header only.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let tokens: Vec<String> = row.iter().map(FieldValue::csv_token).collect();
            out.push_str(&tokens.join(","));
            out.push('\n');
        }
        out
    }

    /// Whole record (table plus summary) as canonical JSON with a trailing
    /// newline. Wall time is deliberately absent.
    pub fn to_json_string(&self) -> String {
        let mut root = serde_json::Map::new();
        root.insert("experiment".into(), Value::from(self.experiment.as_str()));
        root.insert("config_hash".into(), Value::from(self.config_hash.as_str()));
        root.insert(
            "library_version".into(),
            Value::from(self.library_version.as_str()),
        );
        root.insert(
            "columns".into(),
            Value::Array(self.columns.iter().map(|c| Value::from(c.as_str())).collect()),
        );
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| Value::Array(row.iter().map(FieldValue::to_json_value).collect()))
            .collect();
        root.insert("rows".into(), Value::Array(rows));
        let mut summary = serde_json::Map::new();
        for (k, v) in &self.summary {
            summary.insert(k.clone(), v.to_json_value());
        }
        root.insert("summary".into(), Value::Object(summary));
        let mut text = canonical_json(&Value::Object(root));
        text.push('\n');
        text
    }
}

/// Write a record to `path` in the requested format.
pub fn emit(record: &RunRecord, format: OutputFormat, path: &Path) -> Result<()> {
    let content = match format {
        OutputFormat::Csv => record.to_csv_string(),
        OutputFormat::Json => record.to_json_string(),
    };
    io::write_text(path, &content)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> RunRecord {
        let mut record = RunRecord::new(
            "estimate",
            "abc123",
            vec!["trial".into(), "value".into(), "label".into()],
        );
        record
            .push_row(vec![
                FieldValue::Int(0),
                FieldValue::Float(0.5),
                FieldValue::Text("plain".into()),
            ])
            .unwrap();
        record
            .push_row(vec![
                FieldValue::Int(1),
                FieldValue::Float(f64::NAN),
                FieldValue::Text("needs,quoting".into()),
            ])
            .unwrap();
        record.set_summary("assert_ok", FieldValue::Bool(true));
        record.set_summary("mean", FieldValue::Float(0.5));
        record
    }

    #[test]
    fn empty_record_emits_header_only() {
        let record = RunRecord::new("estimate", "abc", vec!["a".into(), "b".into()]);
        assert_eq!(record.to_csv_string(), "a,b\n");
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let csv = sample_record().to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "trial,value,label");
        assert!(lines[1].ends_with(",plain"));
        assert!(lines[2].ends_with(",\"needs,quoting\""));
        assert!(lines[2].contains("NaN"));
    }

    #[test]
    fn csv_floats_round_trip() {
        let v = 0.1 + 0.2;
        let token = FieldValue::Float(v).csv_token();
        assert_eq!(token.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn row_width_is_checked() {
        let mut record = RunRecord::new("estimate", "abc", vec!["a".into()]);
        let err = record
            .push_row(vec![FieldValue::Int(0), FieldValue::Int(1)])
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn json_is_key_sorted_and_newline_terminated() {
        let text = sample_record().to_json_string();
        assert!(text.ends_with('\n'));
        let cols = text.find("\"columns\"").unwrap();
        let hash = text.find("\"config_hash\"").unwrap();
        let rows = text.find("\"rows\"").unwrap();
        let summary = text.find("\"summary\"").unwrap();
        assert!(cols < hash && hash < rows && rows < summary);
        let parsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["rows"][1][1], Value::from("NaN"));
        assert_eq!(parsed["summary"]["assert_ok"], Value::from(true));
    }

    #[test]
    fn canonical_json_ignores_source_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": [1.5, {"y": 2, "x": null}]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": [1.5, {"x": null, "y": 2}], "b": 1}"#).unwrap();
        assert_eq!(canonical_json(&a), canonical_json(&b));
        assert_eq!(
            canonical_json(&a),
            r#"{"a":[1.5000000000000000e0,{"x":null,"y":2}],"b":1}"#
        );
    }

    #[test]
    fn canonical_json_escapes_strings() {
        let v = Value::from("a\"b\n");
        assert_eq!(canonical_json(&v), "\"a\\\"b\\n\"");
    }

    #[test]
    fn assert_ok_reads_summary_flag() {
        let mut record = RunRecord::new("estimate", "abc", vec![]);
        assert_eq!(record.assert_ok(), None);
        record.set_summary("assert_ok", FieldValue::Bool(false));
        assert_eq!(record.assert_ok(), Some(false));
    }

    #[test]
    fn output_format_parses() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("yaml".parse::<OutputFormat>().is_err());
    }

    #[test]
    fn emit_writes_the_exact_string() {
        let dir = tempfile::tempdir().unwrap();
        let record = sample_record();
        let path = dir.path().join("out.csv");
        emit(&record, OutputFormat::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), record.to_csv_string());
        let path = dir.path().join("out.json");
        emit(&record, OutputFormat::Json, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), record.to_json_string());
    }
}
