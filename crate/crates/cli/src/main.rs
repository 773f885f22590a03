//! `abcem` — run, sweep, analyse and time market simulations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] abcem_core::ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] abcem_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "abcem", version, about = "Agent-based computational economic market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Container,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Cross,
    Lls,
    Harras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stat {
    Kurtosis,
    Acf,
    Qq,
    Hist,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every repetition of a configuration and write the results.
    Run {
        config: PathBuf,
        /// Master seed (overrides the file and SABCEMM_SEED).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory (overrides the file).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Cartesian parameter sweep; each point runs into its own directory.
    Sweep {
        config: PathBuf,
        /// `path=v1,v2,...` with element paths below `<simulation>`; repeatable.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Statistics of a written run (or of every run below a directory).
    Analyze {
        path: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "kurtosis,acf")]
        stats: Vec<Stat>,
        /// Series to analyse; prices are turned into log-returns first.
        #[arg(long, default_value = "price")]
        series: String,
        #[arg(long, default_value_t = 20)]
        lags: usize,
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
    /// Time the step loop over agent counts and step counts; CSV on stdout.
    Bench {
        #[arg(long, value_enum, default_value = "cross")]
        model: Model,
        /// Base configuration instead of the built-in model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        agents: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        steps: Vec<usize>,
        /// Timed repetitions per point; the minimum is reported.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
