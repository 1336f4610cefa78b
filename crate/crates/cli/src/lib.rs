//! Command-line driver for nrbo: study configs, trial logs with replay-based
//! resume, the external objective protocol, and benchmark reports.

pub mod bench_cmd;
pub mod config;
pub mod error;
pub mod external;
pub mod log;
pub mod report;
pub mod study;

pub use config::{Direction, ObjectiveSection, OptimizerSection, RunConfigFile};
pub use error::{CliError, CliResult};
pub use external::{evaluate_external, EvalError};
pub use study::{resume_study, run_study, StudyOptions, StudySummary};
