use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    raretail_cli::app::execute(raretail_cli::app::Cli::parse())
}
