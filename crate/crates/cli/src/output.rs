//! Artifact writing. JSON objects have sorted keys and every non-integer
//! number is printed with six fractional digits; CSV files start with a
//! `#` provenance line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::CliError;

pub const SCHEMA_VERSION: u64 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// A JSON number with six fractional digits, or `null` when not finite.
pub fn number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let text = fixed(if x == 0.0 { 0.0 } else { x });
    Value::Number(serde_json::from_str::<Number>(&text).expect("fixed decimal is valid JSON"))
}

fn fix_decimals(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => number(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(items) => Value::Array(items.into_iter().map(fix_decimals).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, fix_decimals(v))).collect()),
        other => other,
    }
}

/// Serializes `value` with fixed decimals.
pub fn to_json<T: Serialize>(value: &T) -> Value {
    fix_decimals(serde_json::to_value(value).expect("artifact serializes"))
}

pub struct Artifacts {
    dir: PathBuf,
    digest: String,
}

impl Artifacts {
    pub fn create(dir: &Path, digest: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest,
        })
    }

    /// Provenance fields shared by every JSON artifact.
    pub fn header(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("schema_version".into(), SCHEMA_VERSION.into());
        m.insert("tool_version".into(), TOOL_VERSION.into());
        m.insert("config_digest".into(), self.digest.clone().into());
        m
    }

    pub fn comment_line(&self, prefix: &str) -> String {
        format!("{prefix} bcv {TOOL_VERSION} config_digest={}\n", self.digest)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, body: Map<String, Value>) -> Result<PathBuf, CliError> {
        let mut doc = self.header();
        doc.extend(body);
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes a CSV with a provenance comment, `header`, and `rows` whose
    /// cells are already formatted.
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<PathBuf, CliError> {
        let mut text = self.comment_line("#");
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }
}

/// File name and content hash of each input.
pub fn describe_inputs(paths: &[PathBuf]) -> Result<Value, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
        let mut m = Map::new();
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        m.insert("file".into(), name.into());
        m.insert("sha256".into(), hex(&Sha256::digest(&bytes)).into());
        out.push(Value::Object(m));
    }
    Ok(Value::Array(out))
}
