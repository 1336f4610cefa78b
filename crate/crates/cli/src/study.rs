//! Running and resuming studies.
//!
//! A fresh run and a resume share one driver: the engine is rebuilt from the
//! config and every logged trial is replayed through ask/tell before any new
//! evaluation happens. Replay checks each logged point against the engine's
//! suggestion bit for bit, so a log only resumes under the settings that
//! produced it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use nrbo_core::{Engine, Point, SearchSpace, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{diff_values, Objective, RunConfigFile};
use crate::error::{CliError, CliResult};
use crate::external::evaluate_external;
use crate::log::{read_log, LogHeader, LogWriter, TrialRecord, TrialStatus, LOG_FORMAT};

pub const LOG_FILE: &str = "trials.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    pub log: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl StudyOptions {
    pub fn out_dir(&self, cfg: &RunConfigFile) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output_dir.clone())
    }

    pub fn log_path(&self, cfg: &RunConfigFile) -> PathBuf {
        self.log.clone().unwrap_or_else(|| self.out_dir(cfg).join(LOG_FILE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Finished,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTrial {
    pub trial: usize,
    pub iteration: usize,
    pub point: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study: String,
    pub variant: Variant,
    pub seed: u64,
    pub status: StudyStatus,
    pub completed_trials: usize,
    pub best: Option<BestTrial>,
    pub error: Option<String>,
}

/// Starts a study from scratch. Refuses to overwrite an existing log.
pub fn run_study(cfg: &RunConfigFile, opts: &StudyOptions) -> CliResult<StudySummary> {
    cfg.validate()?;
    let log_path = opts.log_path(cfg);
    if log_path.exists() {
        return Err(CliError::Config(format!(
            "log {} already exists; use `resume` to continue it",
            log_path.display()
        )));
    }
    let out_dir = opts.out_dir(cfg);
    std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    write_effective_config(cfg, opts.seed, &out_dir)?;
    let header = LogHeader { format: LOG_FORMAT, settings: cfg.settings(opts.seed) };
    let writer = LogWriter::create(&log_path, &header)?;
    drive(cfg, opts, Vec::new(), writer)
}

/// Continues a study from its log. A finished study is left untouched.
pub fn resume_study(cfg: &RunConfigFile, opts: &StudyOptions) -> CliResult<StudySummary> {
    cfg.validate()?;
    let log_path = opts.log_path(cfg);
    if !log_path.exists() {
        return Err(CliError::Config(format!("no log at {}", log_path.display())));
    }
    let contents = read_log(&log_path)?;
    let expected = cfg.settings(opts.seed);
    let diff = diff_values(&contents.header.settings, &expected);
    if !diff.is_empty() {
        return Err(CliError::Config(format!(
            "log {} was written with different settings (log != config):\n  {}",
            log_path.display(),
            diff.join("\n  ")
        )));
    }
    let out_dir = opts.out_dir(cfg);
    std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    let writer = LogWriter::append(&log_path, contents.valid_len)?;
    drive(cfg, opts, contents.trials, writer)
}

fn write_effective_config(cfg: &RunConfigFile, seed: Option<u64>, out_dir: &Path) -> CliResult<()> {
    let mut effective = cfg.clone();
    if let Some(s) = seed {
        effective.optimizer.seed = s;
    }
    let path = out_dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(&effective).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(CliError::io(&path))
}

/// Successful logged trials in order, checked to form a contiguous prefix.
fn replayable(prior: Vec<TrialRecord>) -> CliResult<Vec<TrialRecord>> {
    let ok: Vec<TrialRecord> = prior.into_iter().filter(|t| t.status == TrialStatus::Ok).collect();
    for (k, t) in ok.iter().enumerate() {
        if t.trial != k || t.value.is_none() {
            return Err(CliError::Config(format!(
                "log is not replayable: successful trial #{k} is recorded as trial {} with value {:?}",
                t.trial, t.value
            )));
        }
    }
    Ok(ok)
}

fn params_of(space: &SearchSpace, p: &Point) -> CliResult<BTreeMap<String, f64>> {
    let raw = space.denormalize(p)?;
    Ok(space.dims().iter().zip(raw).map(|(d, v)| (d.name.clone(), v)).collect())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn drive(
    cfg: &RunConfigFile,
    opts: &StudyOptions,
    prior: Vec<TrialRecord>,
    mut log: LogWriter,
) -> CliResult<StudySummary> {
    let ocfg = cfg.optimizer_config(opts.seed)?;
    let seed = ocfg.rng_seed;
    let objective = cfg.resolve_objective()?;
    let replay = replayable(prior)?;
    let mut engine = Engine::new(ocfg)?;
    let mut done: Vec<TrialRecord> = Vec::new();

    let outcome = (|| -> CliResult<()> {
        while !engine.is_finished() {
            let points = engine.ask()?;
            let iteration = if engine.observations().is_empty() { 0 } else { engine.state().iteration + 1 };
            let sched = engine.schedule_snapshot().expect("ask sets the schedule snapshot");
            let mut results = Vec::with_capacity(points.len());
            for p in points {
                let trial = done.len();
                let record = match replay.get(trial) {
                    Some(logged) => {
                        if logged.point.as_slice() != p.coords() {
                            return Err(CliError::Config(format!(
                                "log diverges from the engine at trial {trial}: logged point {:?}, suggested {:?}",
                                logged.point,
                                p.coords()
                            )));
                        }
                        logged.clone()
                    }
                    None => {
                        let params = params_of(&cfg.space, &p)?;
                        let mut record = TrialRecord {
                            trial,
                            iteration,
                            point: p.coords().to_vec(),
                            params,
                            status: TrialStatus::Ok,
                            objective: None,
                            value: None,
                            error: None,
                            sigma1_now: sched.sigma1_now,
                            sigma2_now: sched.sigma2_now,
                            timestamp: String::new(),
                        };
                        let evaluated = evaluate(&objective, &p, &record.params, seed, trial);
                        record.timestamp = now();
                        match evaluated {
                            Ok(y) => {
                                record.objective = Some(y);
                                record.value = Some(cfg.direction.to_internal(y));
                                log.trial(&record)?;
                            }
                            Err(e) => {
                                record.status = TrialStatus::Failed;
                                record.error = Some(e.clone());
                                log.trial(&record)?;
                                return Err(CliError::Protocol(format!("trial {trial} failed: {e}")));
                            }
                        }
                        record
                    }
                };
                results.push((p, record.value.expect("successful trials carry a value")));
                done.push(record);
            }
            engine.tell(&results)?;
        }
        Ok(())
    })();

    let summary = StudySummary {
        study: cfg.study.clone(),
        variant: cfg.optimizer.variant,
        seed,
        status: if outcome.is_ok() { StudyStatus::Finished } else { StudyStatus::Aborted },
        completed_trials: done.len(),
        best: best_trial(&done),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    let out_dir = opts.out_dir(cfg);
    let path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
    outcome.map(|()| summary)
}

/// Evaluates one point; external programs get one retry.
fn evaluate(
    objective: &Objective,
    p: &Point,
    params: &BTreeMap<String, f64>,
    seed: u64,
    trial: usize,
) -> Result<f64, String> {
    match objective {
        Objective::Builtin(obj) => obj.eval(p, obj.draw_seed(seed, trial)).map_err(|e| e.to_string()),
        Objective::External { command, objective_key, timeout } => {
            evaluate_external(command, params, objective_key, *timeout)
                .or_else(|_| evaluate_external(command, params, objective_key, *timeout))
                .map_err(|e| format!("{}: {e}", e.kind()))
        }
    }
}

/// Lowest engine value; ties go to the earliest trial.
fn best_trial(done: &[TrialRecord]) -> Option<BestTrial> {
    done.iter().filter(|t| t.status == TrialStatus::Ok).reduce(|a, b| if b.value < a.value { b } else { a }).map(|t| {
        BestTrial {
            trial: t.trial,
            iteration: t.iteration,
            point: t.point.clone(),
            params: t.params.clone(),
            objective: t.objective.expect("successful trials carry an objective"),
        }
    })
}
