//! `nkg`: reproducible runs of the soliton lab.
//!
//! Exit codes: 0 success; 1 usage, config or I/O error; 2 hypotheses fail,
//! R has no negative set, or fewer than two wells; 3 no (certified) state
//! found; 4 time step above the stability limit; 5 conservation tolerance
//! missed or stability trials failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nkg", version, about = "Standing-wave solitons of the radial nonlinear Klein-Gordon equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// KEY=VALUE with a dotted key, e.g. solve.sigma=20 (repeatable)
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check (H0)-(H3), (NC), (ZC) and decompose the negative set of R
    Check,
    /// Ground state and basin bound state at each configured charge
    Solve,
    /// Estimate kbar, sigma_g and sigma_b
    Thresholds,
    /// One state per well over a charge grid
    Multiplicity,
    /// Evolve an embedded standing wave and log energy and charge
    Evolve,
    /// Perturb a standing wave and track its orbit distance
    Stability,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
    pub fn config(m: impl Into<String>) -> Self {
        Self::new(1, m)
    }
    pub fn io(m: impl Into<String>) -> Self {
        Self::new(1, m)
    }
}

impl From<nkg_core::Error> for Failure {
    fn from(e: nkg_core::Error) -> Self {
        use nkg_core::Error as E;
        let code = match &e {
            E::Cfl { .. } => 4,
            E::NoGroundState(_) | E::BasinExit(_) | E::Window { .. } => 3,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::config("--config PATH is required"))?;
    let loaded = config::load(path, &cli.overrides, cli.seed, cli.workers)?;
    if loaded.config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(loaded.config.workers)
            .build_global()
            .map_err(|e| Failure::config(format!("worker pool: {e}")))?;
    }
    let dir = match (&cli.out, &loaded.config.out) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => loaded.resolve(d),
        (None, None) => PathBuf::from("nkg-out"),
    };
    let out = output::Output { dir, config_hash: loaded.config_hash.clone(), model_hash: loaded.model_hash.clone() };
    match cli.command {
        Command::Check => commands::check(&loaded, &out),
        Command::Solve => commands::solve(&loaded, &out),
        Command::Thresholds => commands::thresholds(&loaded, &out),
        Command::Multiplicity => commands::multiplicity(&loaded, &out),
        Command::Evolve => commands::evolve(&loaded, &out),
        Command::Stability => commands::stability(&loaded, &out),
    }
}
