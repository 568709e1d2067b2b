//! Command-line front end for the `swingfill` solvers.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;

use config::{Cli, Command, FileConfig, RunConfig};
use output::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] swingfill::Error),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command, cfg: &RunConfig) -> Result<Report> {
    match command {
        Command::Solve => commands::cmd_solve(cfg),
        Command::Sweep => commands::cmd_sweep(cfg),
        Command::Compare => commands::cmd_compare(cfg),
        Command::Simulate => commands::cmd_simulate(cfg),
        Command::KktCheck => commands::cmd_kkt_check(cfg),
    }
}

/// Resolves the configuration, runs the command and writes its output.
/// Returns whether every requested point succeeded.
pub fn execute(cli: &Cli) -> Result<bool> {
    let file = match &cli.flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(&cli.flags, &file)?;
    let report = run(cli.command, &cfg)?;
    let text = report.render(cfg.output)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(report.ok)
}
