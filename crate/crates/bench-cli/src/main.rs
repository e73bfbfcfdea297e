//! `cot`: solve single capacity-constrained transport instances, sweep the
//! benchmark families, and export per-iteration trace data.

mod bench;
mod run;
mod solve;
mod trace;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cot", version, about = "capacity-constrained optimal transport toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print a JSON report.
    Solve(SolveArgs),
    /// Run a benchmark sweep and print one row per (size, solver, epsilon).
    Bench(BenchArgs),
    /// Convert a solve trace (JSON lines) into error-vs-time CSV.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Drm,
    Ibp,
    Lp,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Drm => "drm",
            SolverKind::Ibp => "ibp",
            SolverKind::Lp => "lp",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    #[value(name = "uniform-1d")]
    Uniform1d,
    #[value(name = "marginal-1d")]
    Marginal1d,
    #[value(name = "uniform-2d")]
    Uniform2d,
    #[value(name = "marginal-2d")]
    Marginal2d,
}

impl FamilyArg {
    pub fn to_family(self) -> instance_gen::Family {
        match self {
            FamilyArg::Uniform1d => instance_gen::Family::Uniform1d,
            FamilyArg::Marginal1d => instance_gen::Family::Marginal1d,
            FamilyArg::Uniform2d => instance_gen::Family::Uniform2d,
            FamilyArg::Marginal2d => instance_gen::Family::Marginal2d,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyArg::Uniform1d => "uniform-1d",
            FamilyArg::Marginal1d => "marginal-1d",
            FamilyArg::Uniform2d => "uniform-2d",
            FamilyArg::Marginal2d => "marginal-2d",
        }
    }
}

/// Solver tolerances and budgets shared by `solve` and `bench`.
#[derive(Args, Clone)]
pub struct SolverOpts {
    /// Entropic regularization weight (DRM and IBP).
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Outer stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    outer_tol: f64,
    /// Inner Newton tolerance (DRM only).
    #[arg(long, default_value_t = 1e-5)]
    newton_tol: f64,
    /// Outer iteration budget.
    #[arg(long, default_value_t = 100_000)]
    maxiter: usize,
    /// Log-domain stabilization for DRM (pass `--stabilize false` to disable).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    stabilize: bool,
    /// Refuse LP oracle runs on instances with more than this many cells.
    #[arg(long, default_value_t = 10_000)]
    lp_cap: usize,
}

#[derive(Args)]
struct SolveArgs {
    /// Path to a problem instance in JSON form.
    #[arg(long, conflicts_with_all = ["family", "size", "lambda", "delta", "seed"])]
    instance: Option<PathBuf>,

    /// Generator family (used when no --instance is given).
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Grid points (per axis for the 2d families).
    #[arg(long)]
    size: Option<usize>,
    /// Capacity scale for the uniform families.
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise scale for the marginal families.
    #[arg(long)]
    delta: Option<f64>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "drm")]
    solver: SolverKind,

    #[command(flatten)]
    opts: SolverOpts,

    /// Include the full plan matrix in the JSON report.
    #[arg(long, default_value_t = false)]
    emit_plan: bool,
    /// Write per-iteration trace records (JSON lines) to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    size: Vec<usize>,
    /// Capacity scale for the uniform families.
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    /// Noise scale for the marginal families.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Regularization weights to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3])]
    epsilon: Vec<f64>,
    /// Solvers to run, comma separated.
    #[arg(long, value_delimiter = ',', value_enum, default_value = "drm,ibp")]
    solver: Vec<SolverKind>,
    /// Instances per cell; trial t uses seed + t.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Base generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 1e-5)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    newton_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    maxiter: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    stabilize: bool,
    /// Ground-truth cap: above this many cells rel_err becomes N/A.
    #[arg(long, default_value_t = 10_000)]
    lp_cap: usize,
    /// Wall-clock budget per table cell in seconds; exceeded cells print "-".
    #[arg(long, default_value_t = 300.0)]
    time_budget: f64,
    /// Report outer iterations (pivots for lp) in the time column instead of
    /// wall time, making whole rows reproducible.
    #[arg(long, default_value_t = false)]
    deterministic_times: bool,

    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Write rows here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file produced by `cot solve --trace`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes with distinct exit codes, so scripts can tell an
/// infeasible instance (3) from a size cap (4) from a numeric failure (5).
/// Everything else (I/O, parsing, bad flag combinations) exits 1; clap
/// itself exits 2 on usage errors.
pub enum CliError {
    Infeasible(String),
    SizeCap(String),
    Numeric(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Infeasible(_) => 3,
            CliError::SizeCap(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Infeasible(m)
            | CliError::SizeCap(m)
            | CliError::Numeric(m)
            | CliError::Other(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Other(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Other(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve::cmd_solve(args),
        Command::Bench(args) => bench::cmd_bench(args),
        Command::Trace(args) => trace::cmd_trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
