//! Append-only trial log, one JSON object per line.
//!
//! The first line is a header holding the settings that determine the trial
//! sequence. Every later line is one trial. A crash can leave at most one
//! incomplete final line; readers report the length of the valid prefix so
//! the writer can cut it off before appending.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const LOG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Trial(TrialRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    pub settings: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Position in the evaluation sequence, starting at 0.
    pub trial: usize,
    pub iteration: usize,
    pub point: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub status: TrialStatus,
    /// Objective as reported, before any direction flip.
    pub objective: Option<f64>,
    /// Lower-is-better value told to the engine.
    pub value: Option<f64>,
    pub error: Option<String>,
    pub sigma1_now: f64,
    pub sigma2_now: f64,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub header: LogHeader,
    pub trials: Vec<TrialRecord>,
    /// Byte length of the complete, parseable prefix.
    pub valid_len: u64,
}

pub fn read_log(path: &Path) -> CliResult<LogContents> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let mut header = None;
    let mut trials = Vec::new();
    let mut valid_len = 0u64;
    let mut offset = 0usize;
    while offset < bytes.len() {
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map(|i| offset + i + 1);
        let line = &bytes[offset..end.unwrap_or(bytes.len())];
        let parsed: Result<LogLine, _> = serde_json::from_slice(line);
        let lineno = header.is_some() as usize + trials.len() + 1;
        match (parsed, end) {
            (Ok(LogLine::Header(h)), Some(_)) if header.is_none() => header = Some(h),
            (Ok(LogLine::Trial(t)), Some(_)) if header.is_some() => trials.push(t),
            // A torn final write.
            (_, None) => break,
            (Ok(_), Some(_)) => {
                return Err(CliError::Config(format!("{}: line {lineno} is out of place", path.display())))
            }
            (Err(e), Some(_)) => return Err(CliError::Config(format!("{}: line {lineno}: {e}", path.display()))),
        }
        offset = end.expect("complete line");
        valid_len = offset as u64;
    }
    let header = header.ok_or_else(|| CliError::Config(format!("{}: missing log header", path.display())))?;
    if header.format != LOG_FORMAT {
        return Err(CliError::Config(format!(
            "{}: log format {} is not supported (expected {LOG_FORMAT})",
            path.display(),
            header.format
        )));
    }
    Ok(LogContents { header, trials, valid_len })
}

pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    /// Creates a new log holding only `header`.
    pub fn create(path: &Path, header: &LogHeader) -> CliResult<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(path).map_err(CliError::io(path))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.write(&LogLine::Header(header.clone()))?;
        Ok(w)
    }

    /// Opens an existing log for appending after its first `valid_len` bytes.
    pub fn append(path: &Path, valid_len: u64) -> CliResult<Self> {
        let file = OpenOptions::new().append(true).open(path).map_err(CliError::io(path))?;
        file.set_len(valid_len).map_err(CliError::io(path))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn trial(&mut self, record: &TrialRecord) -> CliResult<()> {
        self.write(&LogLine::Trial(record.clone()))
    }

    fn write(&mut self, line: &LogLine) -> CliResult<()> {
        let mut text = serde_json::to_string(line).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.out.write_all(text.as_bytes()).map_err(CliError::io(&self.path))?;
        self.out.flush().map_err(CliError::io(&self.path))
    }
}

/// Log text with every `timestamp` field blanked, for run-to-run comparison.
pub fn strip_timestamps(text: &str) -> String {
    text.lines()
        .map(|l| match serde_json::from_str::<Value>(l) {
            Ok(mut v) => {
                if let Some(ts) = v.get_mut("timestamp") {
                    *ts = Value::Null;
                }
                v.to_string()
            }
            Err(_) => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
