use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rpme_cli::{load_config, run_command, RunConfig, Subcommand};

/// Simulation and estimate harness for the random porous-medium system.
#[derive(Debug, Parser)]
#[command(name = "rpme", version)]
struct Args {
    command: Subcommand,
    /// Configuration file (`key=value` lines or a flat JSON object).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, overriding `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => load_config(path),
        None => Ok(RunConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    match run_command(args.command, &cfg) {
        Ok(outcome) => {
            for r in outcome.reports.iter().filter(|r| !r.passed) {
                eprintln!(
                    "bound exceeded: {} = {:e} > {:e}",
                    r.name,
                    r.measured,
                    r.bound.unwrap_or(f64::NAN)
                );
            }
            if outcome.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
