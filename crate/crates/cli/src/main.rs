//! `ordeal-lab`: runs one experiment from a scenario file and writes its
//! artifacts (TOML reports, CSV tables) to the output directory.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "ordeal-lab", version, about = "Ordeal and damage screening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// scenario TOML file
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// directory for output artifacts
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// grid resolution for tabulated densities and condition scans
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// market-clearing tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// seed for searches and sampled simulations
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// market-clearing ordeals and their welfare
    Solve,
    /// supply-preserving linear boundaries across slopes
    Sweep,
    /// multi-start local search over piecewise-linear boundaries
    Search,
    /// scan the distributional condition on the anti-hazard rates
    CheckConditions,
    /// ordeal versus damage on the counterexample density
    Example1,
    /// ordeal versus damage with one good
    SingleGood,
    /// flow simulation of a waitlist menu
    WaitlistSim,
    /// welfare plus weighted revenue of the posted-ordeal mechanism
    WrSweep,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Convergence(String),
    Io(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Convergence(m) => write!(f, "solver failed: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ordeal_core::Error> for Failure {
    fn from(e: ordeal_core::Error) -> Self {
        match e {
            ordeal_core::Error::Io(m) => Failure::Io(m),
            e if e.is_convergence_failure() => Failure::Convergence(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Convergence(_) => 2,
            _ => 1,
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("ORDEAL_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Validation(format!("ORDEAL_LAB_THREADS: `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let path = cli
        .opts
        .scenario
        .as_ref()
        .ok_or_else(|| Failure::Validation("--scenario is required".into()))?;
    let scenario = Scenario::load(path)?;
    commands::run(cli.command, &scenario, &cli.opts)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ordeal-lab: {e}");
            ExitCode::from(e.code())
        }
    }
}
