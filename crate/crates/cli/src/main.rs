use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pucci_lab::{parse_config, run, THREADS_ENV};

/// Runs a solve, sweep or diagnostic suite described by a configuration file.
#[derive(Debug, Parser)]
#[command(name = "pucci-lab", version)]
struct Args {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("pucci-lab: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return fail(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(e);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", args.config.display())),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", args.config.display())),
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.out));
    cfg.echo.insert("out".into(), out.display().to_string());
    let outcome = run(&cfg, &out);
    if !args.quiet {
        for (name, v) in &outcome.verdicts {
            println!("{:<22} {}", name, v.as_str());
        }
        println!("manifest: {}", outcome.manifest.display());
    }
    if let Some(e) = &outcome.error {
        eprintln!("pucci-lab: {e}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
