//! `wvsim`: batch front-end for the weak-value simulator.
//!
//! Exit status: 0 success, 1 I/O, 2 configuration, 3 physics or failed
//! validation, 4 boundary leak, 5 insufficient statistics.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wvsim::ErrorKind;

use config::{parse_config, RunConfig, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wvsim", version, about = "Weak values on a grid")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML run configuration; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `master_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output` in the config.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

const DEFAULT_OUTPUT: &str = "wvsim-out";

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 1,
        ErrorKind::Config => 2,
        ErrorKind::Physics => 3,
        ErrorKind::BoundaryLeak => 4,
        ErrorKind::Statistics => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let cfg = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => parse_config(&text),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => Ok(RunConfig::default()),
    };
    let cfg = match cfg.and_then(|c| c.resolve(cli.subcommand, cli.seed, cli.out.clone())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = PathBuf::from(cfg.output.as_deref().unwrap_or(DEFAULT_OUTPUT));

    match run::execute(&cfg, &dir) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("wrote {} files to {}", outcome.files.len() + 1, dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
