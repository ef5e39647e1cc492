use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(pld_cli::main_with(pld_cli::Cli::parse()))
}
