//! Line protocol for external objective programs.
//!
//! The program receives one JSON object on stdin mapping parameter names to
//! denormalized values, followed by a newline. It must print a JSON object
//! holding the objective as its last non-empty stdout line and exit with
//! status 0. Earlier stdout lines are ignored so scripts may log freely.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

const POLL_INTERVAL: Duration = Duration::from_millis(5);
const STDERR_TAIL: usize = 2000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot launch `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("no result within {0:?}")]
    Timeout(Duration),
    #[error("exited with {status}; stderr: {stderr}")]
    ExitStatus { status: String, stderr: String },
    #[error("{0}")]
    Unparseable(String),
    #[error("objective `{0}` is not finite")]
    NonFinite(String),
}

impl EvalError {
    /// Stable tag stored in trial logs.
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::Spawn { .. } => "spawn",
            EvalError::Timeout(_) => "timeout",
            EvalError::ExitStatus { .. } => "exit_status",
            EvalError::Unparseable(_) => "unparseable",
            EvalError::NonFinite(_) => "non_finite",
        }
    }
}

pub fn evaluate_external(
    command: &[String],
    params: &BTreeMap<String, f64>,
    objective_key: &str,
    timeout: Duration,
) -> Result<f64, EvalError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| EvalError::Spawn { command: String::new(), message: "empty command".into() })?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::Spawn { command: command.join(" "), message: e.to_string() })?;

    let mut line = serde_json::to_string(params).expect("a float map always serializes");
    line.push('\n');
    if let Some(mut stdin) = child.stdin.take() {
        // The program may exit without reading its input; that is its business.
        let _ = stdin.write_all(line.as_bytes());
    }
    let stdout = read_in_background(child.stdout.take());
    let stderr = read_in_background(child.stderr.take());

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvalError::Timeout(timeout));
            }
            Ok(None) => thread::sleep(POLL_INTERVAL),
            Err(e) => return Err(EvalError::Spawn { command: command.join(" "), message: e.to_string() }),
        }
    };
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    if !status.success() {
        let err = err.trim_end();
        let skip = err.chars().count().saturating_sub(STDERR_TAIL);
        return Err(EvalError::ExitStatus { status: status.to_string(), stderr: err.chars().skip(skip).collect() });
    }
    parse_reply(&out, objective_key)
}

fn read_in_background<R: Read + Send + 'static>(src: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = src {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Extracts the objective from the last non-empty line of `stdout`.
pub fn parse_reply(stdout: &str, objective_key: &str) -> Result<f64, EvalError> {
    let line = stdout
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or_else(|| EvalError::Unparseable("no output on stdout".into()))?;
    let reply: Value =
        serde_json::from_str(line).map_err(|e| EvalError::Unparseable(format!("reply `{line}` is not JSON: {e}")))?;
    let mut node = &reply;
    for part in objective_key.split('.') {
        node =
            node.get(part).ok_or_else(|| EvalError::Unparseable(format!("reply `{line}` has no `{objective_key}`")))?;
    }
    let value = match node {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| EvalError::Unparseable(format!("`{objective_key}` is not a number: {node}")))?;
    if !value.is_finite() {
        return Err(EvalError::NonFinite(node.to_string().trim_matches('"').to_string()));
    }
    Ok(value)
}
