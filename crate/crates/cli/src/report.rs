//! Plain-text reports for study logs and benchmark directories.

use std::fmt::Write as _;
use std::path::Path;

use nrbo_core::bench::ScoreSummary;

use crate::bench_cmd::{RobustnessRow, ROBUSTNESS_FILE, SUMMARIES_FILE};
use crate::error::{CliError, CliResult};
use crate::log::{read_log, TrialStatus};

/// Trial table with the running best of the engine value.
pub fn study_report(log_path: &Path) -> CliResult<String> {
    let log = read_log(log_path)?;
    let mut out = String::new();
    let settings = &log.header.settings;
    let _ = writeln!(
        out,
        "study {}  variant {}  seed {}",
        settings["study"].as_str().unwrap_or("?"),
        settings["optimizer"]["variant"].as_str().unwrap_or("?"),
        settings["optimizer"]["seed"]
    );
    let _ = writeln!(out, "{:>6} {:>5} {:>7} {:>14} {:>14}", "trial", "iter", "status", "objective", "best_value");
    let mut best = f64::INFINITY;
    let mut best_trial = None;
    for t in &log.trials {
        let status = match t.status {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        };
        if let Some(v) = t.value.filter(|v| *v < best) {
            best = v;
            best_trial = Some(t);
        }
        let objective = t.objective.map_or_else(|| "-".to_string(), |o| format!("{o:.6}"));
        let _ = writeln!(out, "{:>6} {:>5} {:>7} {:>14} {:>14.6}", t.trial, t.iteration, status, objective, best);
        if let Some(e) = &t.error {
            let _ = writeln!(out, "       error: {e}");
        }
    }
    match best_trial {
        Some(t) => {
            let _ = writeln!(out, "best: trial {} objective {}", t.trial, t.objective.unwrap_or(f64::NAN));
            for (k, v) in &t.params {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
        None => {
            let _ = writeln!(out, "no successful trials");
        }
    }
    Ok(out)
}

/// Summary table of a benchmark output directory.
pub fn bench_report(dir: &Path) -> CliResult<String> {
    let path = dir.join(SUMMARIES_FILE);
    let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let summaries: Vec<ScoreSummary> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<16} {:>12} {:>10} {:>10} {:>5}",
        "objective", "variant", "mean_best", "std_best", "score", "runs"
    );
    for s in &summaries {
        let score = s.normalized_mean_score.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{:<12} {:<16} {:>12.6} {:>10.6} {:>10} {:>5}",
            s.objective,
            s.variant.as_str(),
            s.mean_best,
            s.std_best,
            score,
            s.runs
        );
    }
    let rob = dir.join(ROBUSTNESS_FILE);
    if rob.exists() {
        let mut reader = csv::Reader::from_path(&rob)
            .map_err(|e| CliError::Io { path: rob.clone(), source: std::io::Error::other(e) })?;
        let _ = writeln!(out, "\n{:>11} {:>11} {:>16}", "noise_level", "rmse_plain", "rmse_regularized");
        for row in reader.deserialize::<RobustnessRow>() {
            let row = row.map_err(|e| CliError::Config(format!("{}: {e}", rob.display())))?;
            let _ = writeln!(out, "{:>11} {:>11.4} {:>16.4}", row.noise_level, row.rmse_plain, row.rmse_regularized);
        }
    }
    Ok(out)
}
