use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inekf_cli::commands::{self, Result};
use inekf_cli::{load_config, load_log, logio};
use inekf_core::sim::FilterKind;

#[derive(Parser)]
#[command(name = "inekf", version, about = "Contact-aided invariant EKF experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a walk; writes the sensor log and `<out>.truth.csv`.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one filter over a log and write its trajectory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        filter: FilterKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized-initialization runs over a log; all filters unless `--filter` is given.
    Montecarlo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        filter: Option<FilterKind>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linearization error against initial attitude error.
    Lintest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Position sample clouds under a large initial yaw uncertainty.
    Covsample {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        filter: Option<FilterKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()).into()),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn kinds(filter: Option<FilterKind>, default: &[FilterKind]) -> Vec<FilterKind> {
    filter.map_or_else(|| default.to_vec(), |k| vec![k])
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, out } => {
            let (log, truth) = commands::simulate(&load_config(config.as_deref())?)?;
            emit(Some(&out), &log)?;
            emit(Some(&logio::truth_path(&out)), &truth)
        }
        Command::Run { config, log, filter, out } => {
            let text = commands::run(&load_config(config.as_deref())?, &load_log(&log)?, filter)?;
            emit(out.as_deref(), &text)
        }
        Command::Montecarlo { config, log, filter, runs, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let text = commands::montecarlo(&cfg, &load_log(&log)?, &kinds(filter, &FilterKind::ALL), runs, seed)?;
            emit(out.as_deref(), &text)
        }
        Command::Lintest { config, out } => emit(out.as_deref(), &commands::lintest(&load_config(config.as_deref())?)?),
        Command::Covsample { config, filter, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let (text, ratios) = commands::covsample(&cfg, &kinds(filter, &[FilterKind::InekfRight, FilterKind::Qekf]), seed)?;
            for (k, r) in ratios {
                eprintln!("{}: ring ratio {r:.4}", k.name());
            }
            emit(out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
