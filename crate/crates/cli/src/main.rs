//! `hgfd`: run the heat and HJB experiments or the verification suite.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::{Experiment, RunConfig, Settings, VerifyConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECKS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "hgfd", version, about = "Gradient-free descent with Matérn pre-bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heat equation on (0, 1) x (0, 2 pi).
    Heat(RunArgs),
    /// Finite-horizon HJB equation.
    Hjb(RunArgs),
    /// Statistical and exact checks on the surrogate problem.
    Verify(VerifyArgs),
}

/// Flags override entries of the `--config` file.
#[derive(Args)]
struct RunArgs {
    /// File of key=value lines using the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Constant learning rate.
    #[arg(long)]
    step: Option<f64>,
    /// Dimension law, e.g. shifted_poisson:100 or geometric:0.5.
    #[arg(long)]
    law: Option<String>,
    /// Sample-size divisor: M_k = ceil(k / c).
    #[arg(long)]
    c: Option<f64>,
    /// Preconditioner: tail or unit.
    #[arg(long)]
    lambda: Option<String>,
    /// Matérn smoothness.
    #[arg(long)]
    nu: Option<f64>,
    /// Matérn inverse length scale.
    #[arg(long)]
    eta: Option<f64>,
    /// QMC nodes for Gram entries.
    #[arg(long)]
    gram_nodes: Option<usize>,
    #[arg(long)]
    interior_nodes: Option<usize>,
    /// Nodes on the boundary (heat) or terminal slice (HJB).
    #[arg(long)]
    boundary_nodes: Option<usize>,
    /// Resolution of the solution and control grids.
    #[arg(long)]
    grid: Option<usize>,
    /// Log every this many iterations.
    #[arg(long)]
    cadence: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    fourth_moment_samples: Option<usize>,
    /// Preconditioner used by the estimator checks; unit is a negative control.
    #[arg(long)]
    lambda: Option<String>,
    /// Include the convergence-rate check.
    #[arg(long)]
    rate: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Option<PathBuf>) -> Result<Settings> {
    match path {
        Some(p) => Settings::from_file(p),
        None => Ok(Settings::default()),
    }
}

fn run_settings(a: &RunArgs) -> Result<Settings> {
    let mut s = load(&a.config)?;
    s.set("seed", a.seed);
    s.set("iterations", a.iterations);
    s.set("step", a.step);
    s.set("law", a.law.as_ref());
    s.set("c", a.c);
    s.set("lambda", a.lambda.as_ref());
    s.set("nu", a.nu);
    s.set("eta", a.eta);
    s.set("gram-nodes", a.gram_nodes);
    s.set("interior-nodes", a.interior_nodes);
    s.set("boundary-nodes", a.boundary_nodes);
    s.set("grid", a.grid);
    s.set("cadence", a.cadence);
    s.set("out", a.out.as_ref().map(|p| p.display()));
    Ok(s)
}

fn verify_settings(a: &VerifyArgs) -> Result<Settings> {
    let mut s = load(&a.config)?;
    s.set("seed", a.seed);
    s.set("replications", a.replications);
    s.set("fourth-moment-samples", a.fourth_moment_samples);
    s.set("lambda", a.lambda.as_ref());
    s.set("rate", a.rate);
    s.set("out", a.out.as_ref().map(|p| p.display()));
    Ok(s)
}

enum Resolved {
    Run(RunConfig),
    Verify(VerifyConfig),
}

fn resolve(command: &Command) -> Result<Resolved> {
    Ok(match command {
        Command::Heat(a) => Resolved::Run(RunConfig::resolve(Experiment::Heat, &run_settings(a)?)?),
        Command::Hjb(a) => Resolved::Run(RunConfig::resolve(Experiment::Hjb, &run_settings(a)?)?),
        Command::Verify(a) => Resolved::Verify(VerifyConfig::resolve(&verify_settings(a)?)?),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let resolved = match resolve(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match &resolved {
        Resolved::Run(cfg) => commands::dispatch_run(cfg),
        Resolved::Verify(cfg) => commands::verify(cfg),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => {
            eprintln!("run diverged; curve.csv holds the iterations up to the abort");
            ExitCode::from(EXIT_DIVERGED)
        }
        Ok(Outcome::ChecksFailed) => ExitCode::from(EXIT_CHECKS_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<hilbert_gfd::GfdError>() {
                Some(hilbert_gfd::GfdError::Config(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
