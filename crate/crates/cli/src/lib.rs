//! Config-driven pipeline runner behind the `hps` binary.
//!
//! Each subcommand reads one JSON config, runs part of the pipeline and
//! writes `report.json`, plot-ready `series_*.csv` files, a `meta.json`
//! sidecar with timing, and `witness_*.json` when an invariant fails.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::Value;

pub use commands::Command;
pub use config::{Overrides, RunConfig};
use output::Output;

pub const TOOLKIT: &str = "hps";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_OUT: &str = "hps-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, unreadable or invalid config, I/O failure.
    Usage,
    /// A checked mathematical invariant does not hold.
    Invariant,
}

#[derive(Clone, Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    /// `module` or `module/stage`.
    pub stage: String,
    pub message: String,
    pub witness: Option<Value>,
}

impl CliError {
    pub fn usage(stage: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            stage: stage.into(),
            message: message.into(),
            witness: None,
        }
    }

    pub fn invariant(stage: impl Into<String>, message: impl Into<String>, witness: Value) -> Self {
        CliError {
            kind: ErrorKind::Invariant,
            stage: stage.into(),
            message: message.into(),
            witness: Some(witness),
        }
    }

    pub fn from_core(module: &str, e: hps_core::Error) -> Self {
        let kind = if e.is_invariant_violation() {
            ErrorKind::Invariant
        } else {
            ErrorKind::Usage
        };
        let stage = match &e {
            hps_core::Error::Stage { stage, .. } => format!("{module}/{stage}"),
            _ => module.to_string(),
        };
        CliError {
            kind,
            stage,
            message: e.to_string(),
            witness: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Invariant => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

/// What a successful run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub headline: String,
}

/// Loads the config at `path`, applies `overrides` and runs `command`.
pub fn run(command: Command, path: &Path, overrides: &Overrides) -> Result<RunSummary, CliError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides);
    run_config(command, cfg)
}

/// Runs `command` on an already parsed config. Invariant failures still
/// leave `report.json` (when the stage got that far), a witness file and
/// `meta.json` behind.
pub fn run_config(command: Command, mut cfg: RunConfig) -> Result<RunSummary, CliError> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let clock = Instant::now();
    let resolved = cfg.resolve()?;
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let out = Output::create(&dir, command.name(), output::to_value(&cfg)?)?;
    let result = commands::execute(command, &cfg, &resolved, &out);
    let mut files = Vec::new();
    let result = match result {
        Ok((headline, written)) => {
            files.extend(written);
            Ok(headline)
        }
        Err(err) => {
            if err.kind == ErrorKind::Invariant {
                out.witness(&err)?;
            }
            Err(err)
        }
    };
    files.push(out.meta(started, clock.elapsed().as_millis())?);
    result.map(|headline| RunSummary {
        out: dir,
        files,
        headline,
    })
}
