use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use paramlearn_cli::{parse_config, run_experiment, EXIT_USAGE};

/// Run a parameter-learning experiment described by a config file.
///
/// Worker threads follow RAYON_NUM_THREADS; log verbosity follows RUST_LOG.
#[derive(Debug, Parser)]
#[command(name = "paramlearn", version)]
struct Args {
    /// Path of the `key = value` config file.
    config: PathBuf,

    /// Output directory, overriding `out_dir` in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let out_dir = args.out_dir.unwrap_or_else(|| config.out_dir.clone());
    match run_experiment(&config, &out_dir) {
        Ok(outcome) => {
            if outcome.verification_passed == Some(false) {
                eprintln!("verification failed; see {}", out_dir.join("verification.csv").display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
