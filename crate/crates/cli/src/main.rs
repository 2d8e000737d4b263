//! `thinobs`: solves, diagnostics, reference solutions and stability
//! certificates, each written to its own run directory.

mod boundary;
mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, Resolver};
use crate::error::CliError;
use crate::run::RunDir;

#[derive(Debug, Parser)]
#[command(name = "thinobs", version, about = "Numerical lab for the fractional unstable obstacle problem")]
struct Cli {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that receives the run directory [default: .]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized data and test draws [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suffix for the run directory name.
    #[arg(long, global = true)]
    tag: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a discrete minimizer.
    Solve(SolveArgs),
    /// Solve, then evaluate monotonicity profiles and free-boundary diagnostics.
    Analyze(AnalyzeArgs),
    /// Sample an explicit reference solution.
    Reference(ReferenceArgs),
    /// Second-variation certificates for the singular solutions.
    Stability(StabilityArgs),
    /// Margin of the Beta-function inequality over a grid of exponents.
    Beta(BetaArgs),
    /// Short summary of the headline checks.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SolveArgs {
    /// Weight exponent a in (−1, 1) [default: -0.5]
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Dimension, 2 or 3 [default: 2]
    #[arg(long)]
    pub n: Option<usize>,
    /// Cells per unit length [default: 64]
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Half-ball radius [default: 1]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Boundary data: an expression in x1, x2, x3 (e.g. `x1+0.2`, `x1^3`) or `random` [default: x1]
    #[arg(long, allow_hyphen_values = true)]
    pub boundary: Option<String>,
    #[arg(long)]
    pub lambda_plus: Option<f64>,
    #[arg(long)]
    pub lambda_minus: Option<f64>,
    /// harmonic | above | below | sup [default: harmonic]
    #[arg(long)]
    pub start: Option<String>,
    /// Outer iteration cap [default: 200]
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Relative residual of each linear solve [default: 1e-10]
    #[arg(long)]
    pub linear_tol: Option<f64>,
    /// Iterate damping in (0, 1] [default: 1]
    #[arg(long)]
    pub damping: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// `auto` (first free boundary point) or `x1,x2,x3` [default: auto]
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<String>,
    /// Smallest radius, in grid spacings [default: 4]
    #[arg(long)]
    pub r_min_cells: Option<f64>,
    /// Largest radius [default: 0.5]
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Number of geometric radii [default: 20]
    #[arg(long)]
    pub radii: Option<usize>,
    /// Random test functions for the first-variation check [default: 20]
    #[arg(long)]
    pub tests: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    /// u2 | line-dipole | test-function [default: u2]
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Angle of the sampling ray in the thin plane [default: π/4 for u2, else 0]
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Height x_n of the sampling ray [default: 0]
    #[arg(long)]
    pub height: Option<f64>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Samples along the ray, geometric spacing [default: 20]
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// u2 | ui [default: u2]
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// `lo:hi:step`; replaces --a
    #[arg(long, allow_hyphen_values = true)]
    pub a_grid: Option<String>,
    /// Number of rays for the ui target [default: 3]
    #[arg(long)]
    pub i: Option<u32>,
    /// Truncation radius of the u2 test function [default: 64]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Sector resolution for the ui target [default: 32]
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    /// `lo:hi:step` [default: -0.99:-0.01:0.01]
    #[arg(long, allow_hyphen_values = true)]
    pub a_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Resolution of the n = 2 solve [default: 64]
    #[arg(long)]
    pub resolution: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share code 1 with other bad input; 2 is reserved
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err((e, path)) => {
            if let Some(p) = path {
                eprintln!("run directory: {}", p.display());
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

type Failure = (CliError, Option<PathBuf>);

fn execute(cli: Cli) -> Result<PathBuf, Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(|e| (e, None))?,
        None => ConfigFile::default(),
    };
    let mut r = Resolver::new(file);
    let setup = (|| -> Result<_, CliError> {
        let out: PathBuf = r.get("out", cli.out.clone(), PathBuf::from("."))?;
        let seed = r.get("seed", cli.seed, 0u64)?;
        let tag: Option<String> = r.get_opt("tag", cli.tag.clone())?;
        let (name, job) = commands::prepare(cli.command, &mut r, seed)?;
        Ok((out, tag, name, job))
    })();
    let (out, tag, name, job) = setup.map_err(|e| (e, None))?;
    let echo = r.finish().map_err(|e| (e, None))?;
    let mut run = RunDir::create(&out, name, tag.as_deref(), cli.config.as_deref(), echo).map_err(|e| (e, None))?;
    let outcome = job.run(&mut run);
    let path = run.path().to_path_buf();
    let finished = run.finish(&outcome);
    match (outcome, finished) {
        (Ok(()), Ok(p)) => Ok(p),
        (Err(e), _) | (Ok(()), Err(e)) => Err((e, Some(path))),
    }
}
