//! `surplus`: run consensus experiments from JSON configs.
//!
//! Exit codes: 0 success, 1 connectivity check failed, 2 unreadable or
//! malformed input, 3 bad config field or argument, 4 weights break the
//! parameter rules, 5 dimension mismatch, 6 output error, 7 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use surplus_core::harness::{
    self, ComparisonTemplate, ExperimentConfig, RunOptions, ScheduleSource,
};
use surplus_core::Error;

#[derive(Parser)]
#[command(
    name = "surplus",
    version,
    about = "Surplus-based average consensus experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trajectory, metrics and summary files.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and SURPLUS_OUTPUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the update matrix M(K) of the first repetition.
        #[arg(long, value_name = "K")]
        dump_matrix: Option<u64>,
    },
    /// Compare surplus and baseline convergence times on the comparison family.
    Compare {
        /// Network sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        template: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every window of K+1 consecutive graphs has a strongly
    /// connected union.
    CheckConnectivity {
        schedule: PathBuf,
        #[arg(long)]
        window: u64,
        #[arg(long)]
        horizon: u64,
    },
    /// Validate a config without running it.
    Validate { config: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Read { .. } | Error::Parse { .. } => 2,
        Error::Config { .. } | Error::InvalidArgument(_) => 3,
        Error::InvalidWeights(_) => 4,
        Error::DimensionMismatch { .. } => 5,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 6,
        _ => 7,
    }
}

fn pick_dir(flag: Option<PathBuf>, fallback: impl FnOnce() -> PathBuf) -> PathBuf {
    flag.or_else(|| std::env::var_os(harness::OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(fallback)
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run {
            config,
            out,
            dump_matrix,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = pick_dir(out, || cfg.output.dir.clone());
            let opts = RunOptions {
                dump_matrix_at: dump_matrix,
            };
            let summary = harness::run_experiment(&cfg, &dir, &opts)?;
            if summary.not_converged > 0 {
                eprintln!(
                    "warning: {} of {} runs did not converge",
                    summary.not_converged,
                    summary.runs.len()
                );
            }
            print_json(&summary)?;
            Ok(0)
        }
        Command::Compare { n, template, out } => {
            let template = ComparisonTemplate::load(&template)?;
            let dir = pick_dir(out, || template.output_dir.clone());
            let table = harness::run_comparison(&n, &template)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            table.write_to(&dir)?;
            table.write_csv(std::io::stdout().lock())?;
            Ok(0)
        }
        Command::CheckConnectivity {
            schedule,
            window,
            horizon,
        } => {
            let source: ScheduleSource = load_json(&schedule)?;
            let (sched, _) = source.build()?;
            let r = sched.joint_connectivity(window, horizon);
            print_json(&json!({
                "holds": r.holds,
                "exhaustive": r.exhaustive,
                "checked_starts": r.checked_starts,
                "first_failure": r.first_failure,
                "window": window,
                "horizon": horizon,
            }))?;
            Ok(if r.holds { 0 } else { 1 })
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exp = cfg.prepare()?;
            print_json(&json!({
                "valid": true,
                "n": exp.schedule.n(),
                "repetitions": exp.initials.len(),
                "horizon": exp.horizon,
            }))?;
            Ok(0)
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_owned(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
