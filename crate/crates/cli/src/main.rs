//! `kinetic-verify <command> --config <path> [--out <dir>] [--threads N] [--deterministic]`
//!
//! Exit codes: 0 when every check passes, 1 when a verification fails or a
//! run breaks down, 2 for configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::json;

use config::{CampaignConfig, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] kinetic_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(kinetic_core::Error::Config(_) | kinetic_core::Error::Domain(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kinetic-verify", version, about = "Verification campaigns for the kinetic Kolmogorov equation")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON campaign configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for summary.json and CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Force thread-count independent reductions.
    #[arg(long)]
    deterministic: bool,
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config = CampaignConfig::load(&cli.config)?.resolve(cli.command, cli.deterministic)?;
    std::fs::create_dir_all(&cli.out)?;
    let outcome = commands::run(&config, &cli.out)?;
    let passed = outcome.failures.is_empty();
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let summary = json!({
        "command": cli.command.name(),
        "passed": passed,
        "failures": outcome.failures,
        "result": outcome.result,
        "files": outcome.files,
        "config": config,
        "timestamp_unix": timestamp,
    });
    std::fs::write(cli.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    for f in &outcome.failures {
        eprintln!("FAILED: {f}");
    }
    println!("{}: {}", cli.command.name(), if passed { "passed" } else { "failed" });
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
