//! CSV / JSON-lines output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64`. Non-finite values are written as `inf`,
//! `-inf` or `nan` (as JSON strings in JSON-lines).
//!
//! Writes go to a temporary sibling file that is renamed into place, so a
//! failed write never leaves a partial file behind. At most one writer per
//! path is allowed inside a process; a second concurrent writer gets an error.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}
impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v as i64)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}
impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format_float(*f),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Value::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(f) if f.is_finite() => format_float(*f),
            Value::Float(f) => format!("\"{}\"", format_float(*f)),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => serde_json::to_string(s).expect("string serialization"),
        }
    }
}

/// Homogeneous rows under a fixed header.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(LabError::contract(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Provenance written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub artifact: String,
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Stamp {
    pub fn new(config_hash: impl Into<String>, master_seed: u64) -> Self {
        Stamp {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            master_seed,
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "# {} {} config_hash={} master_seed={}",
            self.artifact, self.version, self.config_hash, self.master_seed
        )
    }

    fn json_line(&self) -> String {
        serde_json::json!({ "_meta": self }).to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    JsonLines,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteMode {
    Replace,
    /// Keeps existing rows; the header (CSV) or stamp must match.
    Append,
}

fn render(table: &Table, format: Format, stamp: Option<&Stamp>, with_preamble: bool) -> String {
    let mut out = String::new();
    if with_preamble {
        if let Some(s) = stamp {
            out.push_str(&match format {
                Format::Csv => s.csv_line(),
                Format::JsonLines => s.json_line(),
            });
            out.push('\n');
        }
        if format == Format::Csv {
            out.push_str(&table.columns.join(","));
            out.push('\n');
        }
    }
    for row in &table.rows {
        match format {
            Format::Csv => {
                let cells: Vec<String> = row.iter().map(Value::csv).collect();
                out.push_str(&cells.join(","));
            }
            Format::JsonLines => {
                let fields: Vec<String> = table
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| format!("{}:{}", serde_json::to_string(c).unwrap(), v.json()))
                    .collect();
                out.push('{');
                out.push_str(&fields.join(","));
                out.push('}');
            }
        }
        out.push('\n');
    }
    out
}

static ACTIVE: Mutex<Option<HashSet<PathBuf>>> = Mutex::new(None);
static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

struct WriterGuard(PathBuf);

impl WriterGuard {
    fn acquire(path: &Path) -> Result<Self> {
        let key = path
            .parent()
            .and_then(|p| fs::canonicalize(p).ok())
            .map(|p| p.join(path.file_name().unwrap_or_default()))
            .unwrap_or_else(|| path.to_path_buf());
        let mut guard = ACTIVE.lock().unwrap_or_else(|e| e.into_inner());
        let set = guard.get_or_insert_with(HashSet::new);
        if !set.insert(key.clone()) {
            return Err(LabError::contract(format!(
                "another writer holds {}",
                path.display()
            )));
        }
        Ok(WriterGuard(key))
    }
}

impl Drop for WriterGuard {
    fn drop(&mut self) {
        let mut guard = ACTIVE.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(set) = guard.as_mut() {
            set.remove(&self.0);
        }
    }
}

/// Writes `table` to `path`, replacing or appending.
pub fn write_records(
    table: &Table,
    format: Format,
    path: &Path,
    stamp: Option<&Stamp>,
    mode: WriteMode,
) -> Result<()> {
    let _guard = WriterGuard::acquire(path)?;
    let existing = match mode {
        WriteMode::Append if path.exists() => {
            Some(fs::read_to_string(path).map_err(|e| LabError::io(path, e))?)
        }
        _ => None,
    };
    let body = match &existing {
        Some(prev) => {
            let expected = render(
                &Table {
                    rows: vec![],
                    ..table.clone()
                },
                format,
                stamp,
                true,
            );
            if !prev.starts_with(&expected) {
                return Err(LabError::contract(format!(
                    "cannot append to {}: header or stamp differs",
                    path.display()
                )));
            }
            let mut s = prev.clone();
            s.push_str(&render(table, format, stamp, false));
            s
        }
        None => render(table, format, stamp, true),
    };
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(LabError::io(path, e));
    }
    Ok(())
}

/// Reads the data records of a JSON-lines file, skipping the stamp line.
pub fn read_json_lines(path: &Path) -> Result<Vec<serde_json::Map<String, serde_json::Value>>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        match v {
            serde_json::Value::Object(m) if m.contains_key("_meta") => continue,
            serde_json::Value::Object(m) => out.push(m),
            _ => return Err(LabError::Serde(format!("not a JSON object: {line}"))),
        }
    }
    Ok(out)
}

/// Reads a CSV file written by [`write_records`] into header and raw cells.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

/// Parses a float cell as written by [`format_float`].
pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_records(
            &Table::new(&["x", "y"]),
            Format::Csv,
            &p,
            None,
            WriteMode::Replace,
        )
        .unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "x,y\n");
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(f64::INFINITY), "inf");
        let v = 1.0 / 3.0;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn row_width_checked() {
        let mut t = Table::new(&["a"]);
        assert!(t.push(vec![1.0.into(), 2.0.into()]).is_err());
    }

    #[test]
    fn append_requires_matching_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let mut t = Table::new(&["a"]);
        t.push(vec![1i64.into()]).unwrap();
        write_records(&t, Format::Csv, &p, None, WriteMode::Replace).unwrap();
        write_records(&t, Format::Csv, &p, None, WriteMode::Append).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n1\n1\n");
        let other = Table::new(&["b"]);
        assert!(write_records(&other, Format::Csv, &p, None, WriteMode::Append).is_err());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing").join("c.csv");
        let err = write_records(
            &Table::new(&["a"]),
            Format::Csv,
            &p,
            None,
            WriteMode::Replace,
        );
        assert!(matches!(err, Err(LabError::Io { .. })));
        assert!(!p.exists());
    }

    #[test]
    fn csv_quotes_text() {
        assert_eq!(Value::from("a,b").csv(), "\"a,b\"");
    }
}
