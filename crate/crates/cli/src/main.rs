//! `csal`: run, sweep and validate experiments from a TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "csal", version, about = "Active cost-sensitive learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One learner run: step trace CSV and JSON report.
    Run(Common),
    /// Active and passive learners over budgets × replicates, with slope fits.
    Sweep(Common),
    /// Regularity checks of the configured problem.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

type Handler = fn(&config::Resolved) -> Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Run(c) => (c, commands::run),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Validate(c) => (c, commands::validate),
    };
    let overrides = config::Overrides {
        seed: common.seed,
        threads: common.threads,
        out: common.out.clone(),
    };
    match config::load(&common.config, &overrides).and_then(|cfg| cmd(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
