//! `forge`: corpus normalization, adaptation datasets, evaluation,
//! backtranslation, synthetic generation and the review gate.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod args;
mod commands;
mod output;
mod settings;

use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with status 0; real usage errors exit 2.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let ctx = match settings::Context::resolve(&cli.global) {
        Ok(ctx) => ctx,
        Err(e) => return output::fail(cli.global.json, &e),
    };
    init_logging(&ctx.log_level);
    match commands::run(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => output::fail(ctx.json, &e),
    }
}

fn init_logging(level: &str) {
    let level = level.parse().unwrap_or(tracing::Level::WARN);
    let _ = tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}
