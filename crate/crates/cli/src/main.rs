use std::process::ExitCode;

use clap::Parser;
use lightcon_cli::Cli;

fn main() -> ExitCode {
    lightcon_cli::run(Cli::parse())
}
