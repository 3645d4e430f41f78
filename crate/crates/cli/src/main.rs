//! `nullctrl`: drives the control laboratory from plain-text configs.
//!
//! ```text
//! nullctrl run <config> [--check] [--seed N] [--out DIR]
//! ```
//!
//! Exit codes: 0 success, 2 config error, 3 solver non-convergence,
//! 4 internal error. Errors print machine-greppable records on stderr:
//!
//! ```text
//! error.code=2
//! error.kind=validation
//! error.message=weights.s: must be positive and finite
//! ```

mod config;
mod run;

use clap::{Parser, Subcommand};
use config::{parse_config, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nullctrl", about = "Null-control laboratory driver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file
    Run {
        /// Path to the plain-text config
        config: PathBuf,
        /// Verify the weight inequalities for this config and exit
        #[arg(long)]
        check: bool,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    eprintln!("error.code={code}");
    eprintln!("error.kind={kind}");
    eprintln!("error.message={}", message.replace('\n', "; "));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        check,
        seed,
        out,
    } = cli.command;

    // reference mode runs every stage on one worker; a larger request is
    // honored as 1 so configs stay portable to threaded builds
    if let Ok(raw) = std::env::var("NULLCTRL_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(0) | Err(_) => {
                return fail(
                    2,
                    "config",
                    &format!("NULLCTRL_THREADS must be a positive integer, got {raw:?}"),
                );
            }
            Ok(1) => {}
            Ok(n) => {
                eprintln!("note: NULLCTRL_THREADS={n} requested; this build runs sequentially");
            }
        }
    }

    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => return fail(2, "config", &format!("cannot read {}: {e}", config.display())),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            let kind = match e {
                CliError::Parse { .. } => "parse",
                CliError::Validation(_) => "validation",
            };
            return fail(2, kind, &e.to_string());
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }

    if check {
        return match run::check(&cfg) {
            Ok(report) if report.all_passed => ExitCode::SUCCESS,
            Ok(_) => fail(2, "config", "weight inequalities violated on this grid"),
            Err(e) => fail(e.exit_code(), e.kind(), e.message()),
        };
    }

    match run::execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.exit_code(), e.kind(), e.message()),
    }
}
