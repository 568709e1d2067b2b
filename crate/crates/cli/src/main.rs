use std::process::ExitCode;

use clap::Parser;
use swingfill_cli::config::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match swingfill_cli::execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("swingfill: some points failed; see the status column");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("swingfill: {e}");
            ExitCode::FAILURE
        }
    }
}
