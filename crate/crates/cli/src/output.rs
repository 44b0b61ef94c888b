//! Report files. Everything except `meta.json` is a pure function of the
//! resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, TOOLKIT, VERSION};

pub struct Output {
    dir: PathBuf,
    command: &'static str,
    config: Value,
}

impl Output {
    pub fn create(dir: &Path, command: &'static str, config: Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::usage("output", format!("cannot create {}: {e}", dir.display()))
        })?;
        Ok(Output {
            dir: dir.to_path_buf(),
            command,
            config,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn header(&self) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("toolkit".into(), json!(TOOLKIT));
        m.insert("version".into(), json!(VERSION));
        m.insert("command".into(), json!(self.command));
        m.insert("config".into(), self.config.clone());
        m
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::usage("output", e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| CliError::usage("output", format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn report<T: Serialize>(&self, result: &T) -> Result<PathBuf, CliError> {
        let mut m = self.header();
        m.insert("result".into(), to_value(result)?);
        self.write_json("report.json", &Value::Object(m))
    }

    pub fn witness(&self, err: &CliError) -> Result<PathBuf, CliError> {
        let mut m = self.header();
        m.insert("stage".into(), json!(err.stage));
        m.insert("error".into(), json!(err.message));
        if let Some(w) = &err.witness {
            m.insert("witness".into(), w.clone());
        }
        let name = format!("witness_{}.json", err.stage.replace(['/', ' '], "_"));
        self.write_json(&name, &Value::Object(m))
    }

    /// Run metadata that is allowed to differ between identical runs.
    pub fn meta(&self, started_unix_ms: u128, elapsed_ms: u128) -> Result<PathBuf, CliError> {
        let value = json!({
            "toolkit": TOOLKIT,
            "version": VERSION,
            "command": self.command,
            "started_unix_ms": started_unix_ms,
            "elapsed_ms": elapsed_ms,
            "out": self.dir.display().to_string(),
        });
        self.write_json("meta.json", &value)
    }

    /// Writes `series_<name>.csv`.
    pub fn series<I>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(format!("series_{name}.csv"));
        let io = |e: csv::Error| CliError::usage("output", format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::usage("output", format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::usage("output", e.to_string()))
}
