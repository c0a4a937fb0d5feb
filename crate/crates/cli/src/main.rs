mod commands;
mod config;
mod log;

use clap::Parser;

use crate::commands::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(commands::run(cli));
}
