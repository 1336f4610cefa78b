use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nrbo_cli::bench_cmd::{run_bench, MatrixConfig};
use nrbo_cli::report::{bench_report, study_report};
use nrbo_cli::{resume_study, run_study, CliError, CliResult, RunConfigFile, StudyOptions};

#[derive(Parser)]
#[command(name = "nrbo", version, about = "Neighbor-regularized Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trial log; defaults to <out>/trials.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `optimizer.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Start a study and run it to its budget.
    Run(StudyArgs),
    /// Continue a study from its trial log.
    Resume(StudyArgs),
    /// Run a benchmark matrix over the builtin objectives.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print a study log or a benchmark directory as a table.
    Report {
        #[arg(long, conflicts_with = "out", required_unless_present = "out")]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn study(args: StudyArgs, resume: bool) -> CliResult<()> {
    let cfg = RunConfigFile::load(&args.config)?;
    let opts = StudyOptions { log: args.log, out: args.out, seed: args.seed };
    let summary = if resume { resume_study(&cfg, &opts)? } else { run_study(&cfg, &opts)? };
    match &summary.best {
        Some(b) => println!(
            "{}: {} trials, best objective {} at trial {}",
            summary.study, summary.completed_trials, b.objective, b.trial
        ),
        None => println!("{}: no trials", summary.study),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => study(args, false),
        Command::Resume(args) => study(args, true),
        Command::Bench { config, out, jobs } => {
            let cfg = MatrixConfig::load(&config)?;
            cfg.validate()?;
            if jobs == Some(0) {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            pool.install(|| run_bench(&cfg, &out))?;
            print!("{}", bench_report(&out)?);
            Ok(())
        }
        Command::Report { log, out } => {
            let text = match (log, out) {
                (Some(log), _) => study_report(&log)?,
                (None, Some(out)) => bench_report(&out)?,
                (None, None) => unreachable!("clap requires one of --log/--out"),
            };
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nrbo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
