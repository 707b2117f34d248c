use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = lsd2_cli::Cli::parse();
    match lsd2_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
