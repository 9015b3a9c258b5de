//! Append-only JSON-lines metrics log.
//!
//! Each record is written with a single `write` call of one complete line,
//! so a log cut short at any line boundary is still a valid log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that redirects every metrics log.
pub const LOG_DIR_ENV: &str = "LIGHTCON_LOG_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Step,
    Epoch,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub ts_ms: u64,
    pub run: String,
    pub kind: RecordKind,
    pub payload: serde_json::Value,
}

pub struct MetricsLog {
    path: PathBuf,
    run: String,
    file: Mutex<File>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl MetricsLog {
    /// Opens `path` for appending, creating parent directories.
    pub fn open(path: impl Into<PathBuf>, run: impl Into<String>) -> Result<Self, CliError> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            path,
            run: run.into(),
            file: Mutex::new(file),
        })
    }

    /// `<dir>/<run>.jsonl`.
    pub fn in_dir(dir: &Path, run: &str) -> Result<Self, CliError> {
        Self::open(dir.join(format!("{run}.jsonl")), run)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run(&self) -> &str {
        &self.run
    }

    pub fn record(&self, kind: RecordKind, payload: &impl Serialize) -> Result<(), CliError> {
        let record = MetricsRecord {
            ts_ms: now_ms(),
            run: self.run.clone(),
            kind,
            payload: serde_json::to_value(payload).map_err(|e| CliError::Io(format!("metrics payload: {e}")))?,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes()).map_err(|e| CliError::io(&self.path, e))
    }
}

/// Parses every complete line of a metrics log.
pub fn read_log(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .map(|line| serde_json::from_str(line).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}
