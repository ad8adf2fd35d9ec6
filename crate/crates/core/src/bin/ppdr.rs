use std::process::ExitCode;

use clap::Parser;
use ppdr::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
