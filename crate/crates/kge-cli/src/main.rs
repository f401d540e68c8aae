use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = kge_cli::Cli::parse();
    match kge_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
