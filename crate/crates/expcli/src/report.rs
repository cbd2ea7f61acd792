//! Report assembly and rendering.
//!
//! Every subcommand produces exactly one report: an envelope (experiment id,
//! timestamp, build id, config hash, resolved config) plus metric rows. The
//! same report renders to CSV or JSON; both forms embed the full resolved
//! config so a run can be reproduced from the report file alone. Writes are
//! atomic (temp file in the target dir, then rename).

use std::env;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Map, Number};

/// One metric value. Numeric fields are finite by construction; a quantity
/// whose linear value overflows f64 is carried as its base-10 logarithm.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(u64),
    Bool(bool),
    Overflow { log10: f64 },
    Text(String),
}

impl Value {
    /// Wraps a float, refusing NaN/inf so bad numerics surface as errors
    /// instead of silently landing in a report.
    pub fn real(v: f64) -> Result<Value, String> {
        if v.is_finite() {
            Ok(Value::Real(v))
        } else {
            Err(format!("non-finite metric value {v}"))
        }
    }

    /// Canonical text form, shared by the CSV renderer and stdout summary.
    pub fn text(&self) -> String {
        match self {
            Value::Real(v) => format!("{v:e}"),
            Value::Int(v) => v.to_string(),
            Value::Bool(v) => v.to_string(),
            Value::Overflow { log10 } => format!("overflow:log10={log10:e}"),
            Value::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub metric: String,
    pub value: Value,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub flags: Vec<String>,
}

impl Row {
    pub fn new(metric: &str, value: Value) -> Row {
        Row { metric: metric.to_string(), value, ci_low: None, ci_high: None, flags: Vec::new() }
    }

    pub fn with_ci(mut self, low: f64, high: f64) -> Row {
        self.ci_low = Some(low);
        self.ci_high = Some(high);
        self
    }

    pub fn with_flag(mut self, flag: &str) -> Row {
        self.flags.push(flag.to_string());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub timestamp: String,
    pub build: String,
    pub config_hash: String,
    /// Canonical `(key, value)` pairs, sorted by key.
    pub config: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

/// `<pkg version>+<git short hash>`, the latter baked in by the build script.
pub fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("BUILD_GIT_ID"))
}

/// RFC 3339 UTC seconds. `SOURCE_DATE_EPOCH` overrides the clock so that
/// archived runs and determinism checks produce byte-identical files.
pub fn timestamp() -> String {
    let secs = env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .unwrap_or_else(|| Utc::now().timestamp());
    DateTime::<Utc>::from_timestamp(secs, 0)
        .unwrap_or_else(|| DateTime::<Utc>::from_timestamp(0, 0).expect("epoch"))
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl Report {
    pub fn new(experiment: &str, config_hash: &str, config: Vec<(String, String)>) -> Report {
        Report {
            experiment: experiment.to_string(),
            timestamp: timestamp(),
            build: build_id(),
            config_hash: config_hash.to_string(),
            config,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    /// CSV form: `##` envelope lines, `# key = value` config lines, then a
    /// fixed nine-column table. Floats print in full round-trip precision
    /// with an explicit exponent.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("## catgeo report v1\n");
        out.push_str(&format!("## experiment = {}\n", self.experiment));
        out.push_str(&format!("## timestamp = {}\n", self.timestamp));
        out.push_str(&format!("## build = {}\n", self.build));
        out.push_str(&format!("## config-hash = {}\n", self.config_hash));
        for (k, v) in &self.config {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str("experiment,timestamp,build,config_hash,metric,value,ci_low,ci_high,flags\n");
        for row in &self.rows {
            let ci_low = row.ci_low.map(|v| format!("{v:e}")).unwrap_or_default();
            let ci_high = row.ci_high.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                csv_field(&self.experiment),
                self.timestamp,
                self.build,
                self.config_hash,
                csv_field(&row.metric),
                csv_field(&row.value.text()),
                ci_low,
                ci_high,
                csv_field(&row.flags.join(";")),
            ));
        }
        out
    }

    /// JSON form. Integers above 2^53 are emitted as strings and the row is
    /// flagged, so no reader silently rounds them through a double.
    pub fn to_json(&self) -> String {
        let mut config = Map::new();
        for (k, v) in &self.config {
            config.insert(k.clone(), json!(v));
        }
        let rows: Vec<serde_json::Value> = self.rows.iter().map(|r| self.row_json(r)).collect();
        let doc = json!({
            "report": "catgeo report v1",
            "experiment": self.experiment,
            "timestamp": self.timestamp,
            "build": self.build,
            "config_hash": self.config_hash,
            "config": serde_json::Value::Object(config),
            "rows": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        text
    }

    fn row_json(&self, row: &Row) -> serde_json::Value {
        let mut flags = row.flags.clone();
        let value = match &row.value {
            Value::Real(v) => {
                serde_json::Value::Number(Number::from_f64(*v).expect("finite by construction"))
            }
            Value::Int(v) => {
                if *v > (1u64 << 53) {
                    flags.push("precision:integer-as-string".to_string());
                    json!(v.to_string())
                } else {
                    json!(v)
                }
            }
            Value::Bool(v) => json!(v),
            Value::Overflow { log10 } => json!(format!("overflow:log10={log10:e}")),
            Value::Text(s) => json!(s),
        };
        json!({
            "experiment": self.experiment,
            "timestamp": self.timestamp,
            "build": self.build,
            "config_hash": self.config_hash,
            "metric": row.metric,
            "value": value,
            "ci_low": row.ci_low,
            "ci_high": row.ci_high,
            "flags": flags.join(";"),
        })
    }

    pub fn render(&self, format: &str) -> String {
        match format {
            "json" => self.to_json(),
            _ => self.to_csv(),
        }
    }

    /// Writes the report under `dir` as `<experiment>-<config hash>.<ext>`
    /// and returns the path.
    pub fn write(&self, dir: &Path, format: &str) -> io::Result<PathBuf> {
        let ext = if format == "json" { "json" } else { "csv" };
        let path = dir.join(format!("{}-{}.{}", self.experiment, self.config_hash, ext));
        write_atomic(&path, &self.render(format))?;
        Ok(path)
    }
}

/// Minimal CSV quoting: only fields containing a delimiter, quote, or
/// newline get wrapped, so the common all-clean case stays grep-friendly.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write-to-temp-then-rename in the destination directory, so a crashed or
/// interrupted run never leaves a truncated report behind.
pub fn write_atomic(path: &Path, text: &str) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new(
            "density",
            "0011223344556677",
            vec![("delta".into(), "1e-2".into()), ("n".into(), "1000".into())],
        );
        r.timestamp = "2026-01-01T00:00:00Z".into();
        r.push(Row::new("rho", Value::Real(0.0127)).with_ci(0.012, 0.013).with_flag("mc"));
        r.push(Row::new("hits", Value::Int(9007199254740993)));
        r.push(Row::new("bound", Value::Overflow { log10: -1.5e14 }));
        r
    }

    #[test]
    fn csv_embeds_config_and_full_precision_values() {
        let text = sample().to_csv();
        assert!(text.contains("# delta = 1e-2\n"));
        assert!(text.contains("## config-hash = 0011223344556677\n"));
        assert!(text.contains(",rho,1.27e-2,1.2e-2,1.3e-2,mc\n"));
        assert!(text.contains(",hits,9007199254740993,,,\n"));
        assert!(text.contains("overflow:log10=-1.5e14"));
    }

    #[test]
    fn json_stringifies_integers_beyond_double_precision() {
        let text = sample().to_json();
        assert!(text.contains("\"9007199254740993\""));
        assert!(text.contains("precision:integer-as-string"));
        assert!(text.contains("\"overflow:log10=-1.5e14\""));
        let parsed: serde_json::Value = serde_json::from_str(&text).expect("valid json");
        assert_eq!(parsed["rows"][0]["value"].as_f64(), Some(0.0127));
        assert_eq!(parsed["config"]["delta"], "1e-2");
    }

    #[test]
    fn non_finite_values_are_refused() {
        assert!(Value::real(f64::NAN).is_err());
        assert!(Value::real(f64::INFINITY).is_err());
        assert!(Value::real(-0.5).is_ok());
    }

    #[test]
    fn atomic_write_round_trips() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("nested").join("r.csv");
        write_atomic(&path, "payload\n").expect("write");
        assert_eq!(std::fs::read_to_string(&path).expect("read"), "payload\n");
        write_atomic(&path, "replaced\n").expect("overwrite");
        assert_eq!(std::fs::read_to_string(&path).expect("read"), "replaced\n");
    }
}
