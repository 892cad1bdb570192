//! `sigfuse`: train, evaluate and serve fused face-attribute networks.

mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.code == error::USAGE {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(e.code)
        }
    }
}
