//! `bao` command-line driver.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use bao::Error;
use clap::Parser;

use args::{Cli, Command};

/// 1: bad input or usage. 2: no feasible weights, tuning or fitting failed.
/// 3: internal error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::Spec(_) | Error::Argument(_) | Error::Io(_) | Error::Json(_) => 1,
        Error::Infeasible(_) | Error::Tuning(_) | Error::Fit(_) => 2,
        Error::Structural(_) => 3,
    }
}

fn run(command: Command) -> bao::Result<()> {
    match command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Tune(a) => commands::tune(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Diagnose(a) => commands::diagnose(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
