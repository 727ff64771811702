use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rte_tomo_cli::{parse_config, run_command, Command};

/// Partial-data transport tomography experiments.
#[derive(Parser, Debug)]
#[command(name = "rte-tomo", version)]
struct Args {
    command: Command,
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads_from_env() -> Result<usize, String> {
    match std::env::var("RTE_TOMO_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("RTE_TOMO_THREADS must be a nonnegative integer, got `{v}`")),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let threads = match threads_from_env() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    cfg.resolve_paths(&base);
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match run_command(args.command, &cfg, &out) {
        Ok(summary) => {
            for l in &summary.lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
