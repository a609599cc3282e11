// SPDX-License-Identifier: Apache-2.0

//! `tidedune` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tidedune::{Error, RegimeKind};

use crate::config::{parse_list, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "tidedune",
    version,
    about = "Tide-driven dune morphodynamics on the torus"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; must already exist.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated list, fractions allowed (`1/25,1/50`).
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilons: Option<String>,
    /// Grid points per direction.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive the dimensionless regime from physical inputs.
    Regime {
        #[arg(long)]
        kind: Option<RegimeKind>,
        /// Physical override `NAME=VALUE` (e.g. `D_G=2e-4`); repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Integrate the fine model and persist the trajectory.
    Run,
    /// Solve the θ-periodic cell problem at one slow time.
    Cell {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Use the ε-dependent regime coefficients.
        #[arg(long)]
        frozen: bool,
    },
    /// Verification reports.
    Verify {
        #[arg(value_enum)]
        kind: VerifyKind,
        /// Penalization values for `contraction`; repeatable.
        #[arg(long)]
        mu: Vec<f64>,
        /// Write measured runtimes into the CSV (breaks byte-identical reruns).
        #[arg(long)]
        timings: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyKind {
    /// Two-scale error and corrector remainder over ε.
    Sweep,
    /// Period-map contraction ratios.
    Contraction,
    /// Distance to the quasi-periodic reconstruction over time.
    Closeness,
}

/// Exit statuses besides success.
pub enum Failure {
    /// A hard invariant check failed; artifacts were still written.
    Check(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn build_config(global: &Global) -> Result<RunConfig, Error> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(n) = global.grid {
        cfg.grid = n;
    }
    if let Some(list) = &global.epsilons {
        cfg.sweep.epsilons = parse_list(list)?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = build_config(&cli.global)?;
    match cli.command {
        Command::Regime { kind, params } => {
            if let Some(k) = kind {
                cfg.regime.kind = k;
            }
            for p in &params {
                cfg.set_physical(p)?;
            }
            commands::regime(&cfg)
        }
        Command::Run => commands::run(&cfg),
        Command::Cell { t, tau, frozen } => {
            if let Some(t) = t {
                cfg.cell.t = t;
            }
            if let Some(tau) = tau {
                cfg.cell.tau = tau;
            }
            cfg.cell.frozen |= frozen;
            commands::cell(&cfg)
        }
        Command::Verify { kind, mu, timings } => {
            if !mu.is_empty() {
                cfg.contraction.mu = mu;
            }
            commands::verify(&cfg, kind, timings)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
