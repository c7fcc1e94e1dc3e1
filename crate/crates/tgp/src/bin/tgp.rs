//! Batch front door: `tgp --config run.json [--assert] [--seed N] [--out DIR]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tgp::config::RunConfig;
use tgp::runner::{run, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(
    name = "tgp",
    about = "Target-game pricing under drift/volatility uncertainty",
    version
)]
struct Args {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Enforce result thresholds through the exit code (CI use).
    #[arg(long, default_value_t = false)]
    r#assert: bool,

    /// Override the Monte Carlo seed from the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for result files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();

    // TGP_THREADS caps worker parallelism; unset means rayon's default.
    if let Ok(threads) = std::env::var("TGP_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("thread pool is built once at startup");
            }
            _ => {
                eprintln!("TGP_THREADS must be a positive integer (got {threads:?})");
                return ExitCode::from(EXIT_VALIDATION as u8);
            }
        }
    }

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", args.config.display());
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config parse error: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    ExitCode::from(run(&config, &args.out, args.r#assert, args.seed) as u8)
}
