//! `hyperproto` command-line driver.
//!
//! Exit codes: 0 success, 1 numeric failure (divergence, non-finite values),
//! 2 usage or input error. `HYPERPROTO_THREADS` sizes the worker pool.

mod args;
mod commands;
mod dump;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<hyperproto::Error>())
        .any(hyperproto::Error::is_numeric);
    if numeric {
        1
    } else {
        2
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("HYPERPROTO_THREADS") else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if !hyperproto::parallel::configure_threads(n) {
                log::debug!("thread pool already configured or parallel feature off");
            }
            Ok(())
        }
        _ => Err(format!("HYPERPROTO_THREADS must be a positive integer, got {raw:?}")),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }

    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a, &argv),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
