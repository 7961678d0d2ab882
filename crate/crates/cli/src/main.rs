//! `ks-selfsim`: command-line front end for the stationary, spectral,
//! inequality and evolution experiments.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
//! (non-convergence), 4 a checked inequality or tolerance was violated,
//! 1 I/O failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Command, ConfigError, Settings};

#[derive(Debug, Parser)]
#[command(name = "ks-selfsim", version, about = "Self-similar Keller-Segel experiments")]
struct Cli {
    command: Command,
    /// Mass, or a comma-separated list for `sweep`; multiples of π as `2pi`.
    #[arg(long = "M", allow_hyphen_values = true)]
    mass: Vec<String>,
    /// Grid nodes, a power of two between 64 and 8192.
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    rmax: Option<String>,
    /// Stationary solver tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Highest angular mode.
    #[arg(long)]
    kmax: Option<String>,
    /// Final time of the evolution.
    #[arg(long = "T")]
    t_end: Option<String>,
    /// Sampling interval of the evolution.
    #[arg(long)]
    dt: Option<String>,
    /// Mass step for the zero mode.
    #[arg(long = "dM")]
    dm: Option<String>,
    #[arg(long = "corpus-seed")]
    corpus_seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn settings(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut s = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            Settings::parse_file(&text)?
        }
        None => Settings::default(),
    };
    if !cli.mass.is_empty() {
        s.set("M", cli.mass.join(","))?;
    }
    let flags = [
        ("grid.N", &cli.n),
        ("grid.R_max", &cli.rmax),
        ("tol", &cli.tol),
        ("kmax", &cli.kmax),
        ("T", &cli.t_end),
        ("dt", &cli.dt),
        ("dM", &cli.dm),
        ("corpus.seed", &cli.corpus_seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, v.as_str())?;
        }
    }
    if let Some(out) = &cli.out {
        s.set("out", out.to_string_lossy())?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match settings(&cli).and_then(|s| s.resolve(cli.command)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    let (bundle, error) = run::run(&cfg);
    for c in &bundle.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} {}: {:e} ({})", c.criterion, c.name, c.measured, c.tolerance);
    }
    println!("wrote {} to {}", bundle.files.join(", "), cfg.out.display());
    if let Some(e) = error {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    if bundle.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}
