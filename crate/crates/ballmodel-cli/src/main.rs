use std::process::ExitCode;

use ballmodel_cli::Cli;
use clap::Parser;

fn main() -> ExitCode {
    ballmodel_cli::run(&Cli::parse())
}
