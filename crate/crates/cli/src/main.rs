//! `ploop`: run closed-loop lifecycle scenarios and inspect their reports.
//!
//! Exit codes: 0 success, 1 parse/validation/IO error, 2 internal invariant
//! violation. Log verbosity comes from `PLOOP_LOG_LEVEL`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ploop_core::harness::{self, compare, load_scenario, HarnessError, IncomparableRuns, Run, RunReport};
use ploop_core::runtime::LogRecord;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "ploop", version, about = "Closed-loop product lifecycle simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and print its report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the event log, reports and knowledge repositories.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Recompute a report from a saved event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Load and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Compare a feedback-enabled report (a) against a baseline report (b).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Log {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: not a report: {source}")]
    Report { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Incomparable(#[from] IncomparableRuns),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Harness(HarnessError::Invariant(_) | HarnessError::Setup(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn print_report(report: &RunReport, format: Format) {
    match format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => print!("{}", report.to_json()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_outputs(run: &Run, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let events = dir.join("events.jsonl");
    let file = File::create(&events).map_err(io_err(&events))?;
    let mut out = BufWriter::new(file);
    LogRecord::write_jsonl(run.log(), &mut out)
        .and_then(|()| out.flush())
        .map_err(io_err(&events))?;

    write_file(&dir.join("report.json"), &run.report.to_json())?;
    write_file(&dir.join("report.txt"), &run.report.to_text())?;

    for node in run.world.nodes() {
        if node.repository().is_empty() {
            continue;
        }
        let path = dir.join(format!("knowledge-{}.jsonl", node.id()));
        let file = File::create(&path).map_err(io_err(&path))?;
        node.repository()
            .write_jsonl(BufWriter::new(file))
            .map_err(|e| CliError::Io {
                path: path.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
    }
    let insights = serde_json::to_string_pretty(&run.insights()).expect("insights serialize") + "\n";
    write_file(&dir.join("insights.json"), &insights)?;
    log::info!("wrote outputs to {}", dir.display());
    Ok(())
}

fn read_report(path: &Path) -> Result<RunReport, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunReport::from_json(&text).map_err(|source| CliError::Report {
        path: path.to_owned(),
        source,
    })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => {
            let s = load_scenario(&scenario).map_err(HarnessError::from)?;
            log::info!("running {} for {} ticks", s.name, s.horizon);
            let run = harness::simulate(&s, seed)?;
            if let Some(dir) = out {
                write_outputs(&run, &dir)?;
            }
            print_report(&run.report, format);
        }
        Command::Report { log, format } => {
            let file = File::open(&log).map_err(io_err(&log))?;
            let records = LogRecord::read_jsonl(BufReader::new(file)).map_err(|(line, message)| CliError::Log {
                path: log.clone(),
                line,
                message,
            })?;
            print_report(&RunReport::from_log(&records), format);
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario).map_err(HarnessError::from)?;
            println!(
                "ok: {} ({} nodes, {} agents, {} stimuli, horizon {})",
                s.name,
                s.nodes.len(),
                s.agents.len(),
                s.stimuli.len(),
                s.horizon
            );
        }
        Command::Compare { a, b } => {
            let summary = compare(&read_report(&a)?, &read_report(&b)?)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLOOP_LOG_LEVEL", "error")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
