mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tailgraph::inference::CriticalMethod;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

const THREADS_VAR: &str = "TAILGRAPH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "tailgraph", version, about = "Tail dependence, partial tail correlation and extremal graphs")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample X = A o Z from the AR(1) model or a coefficient file.
    Simulate(SimulateArgs),
    /// Rank-transform each column to shifted Pareto margins.
    Preprocess(PreprocessArgs),
    /// Estimate the TPDM and its inverse.
    Tpdm(TpdmArgs),
    /// Test every pair for zero partial tail correlation.
    PtcTest(PtcTestArgs),
    /// Monte Carlo coverage of the confidence interval under the AR(1) model.
    Coverage(CoverageArgs),
    /// Build the extremal graph from a report or a table of statistics.
    Graph(GraphArgs),
}

fn quantile(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn critical(s: &str) -> Result<CriticalMethod, String> {
    s.parse().map_err(|e: tailgraph::Error| e.to_string())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pairwise,
    Global,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MassArg {
    Fixed2,
    Estimate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    ShiftedPareto,
    Frechet,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// AR(1) coefficient in (0, 1).
    #[arg(long, default_value_t = 0.7)]
    pub phi: f64,
    /// Dimension of the AR(1) model.
    #[arg(short, long, default_value_t = 4)]
    pub p: usize,
    /// Number of rows.
    #[arg(short, long, default_value_t = 10_000)]
    pub n: usize,
    /// CSV file with a coefficient matrix A (p rows, q columns) instead of the AR(1) model.
    #[arg(long)]
    pub coef: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = NoiseArg::ShiftedPareto)]
    pub noise: NoiseArg,
    /// Root seed; drawn from the OS and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: std::path::PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PreprocessArgs {
    #[arg(short, long)]
    pub input: std::path::PathBuf,
    #[arg(short, long)]
    pub output: std::path::PathBuf,
    /// Where to write the shift metadata; defaults to `<output>.delta.json`.
    #[arg(long)]
    pub sidecar: Option<std::path::PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EstimationArgs {
    /// Quantile of the radius above which observations count as extreme.
    #[arg(long, value_parser = quantile, default_value_t = 0.95)]
    pub radial_quantile: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Pairwise)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = MassArg::Fixed2)]
    pub mass: MassArg,
}

#[derive(Args, Debug, Clone)]
pub struct TpdmArgs {
    #[arg(short, long)]
    pub input: std::path::PathBuf,
    /// JSON output with the estimate, its inverse and metadata.
    #[arg(short, long)]
    pub output: std::path::PathBuf,
    /// Optional CSV copy of the estimate.
    #[arg(long)]
    pub csv: Option<std::path::PathBuf>,
    /// Optional CSV copy of the inverse.
    #[arg(long)]
    pub inverse_csv: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TestingArgs {
    /// Keep only rows whose predicted pair is above this quantile (off by default).
    #[arg(long, value_parser = quantile)]
    pub pred_quantile: Option<f64>,
    /// Quantile of the residual radius used by the estimator.
    #[arg(long, value_parser = quantile, default_value_t = 0.98)]
    pub res_quantile: f64,
    #[arg(long, value_parser = quantile, default_value_t = 0.05)]
    pub alpha: f64,
    /// bonferroni, none, or fixed:<c>.
    #[arg(long, value_parser = critical, default_value = "bonferroni")]
    pub critical: CriticalMethod,
}

#[derive(Args, Debug, Clone)]
pub struct PtcTestArgs {
    /// Preprocessed sample.
    #[arg(short, long, required_unless_present = "stats", conflicts_with = "stats")]
    pub input: Option<std::path::PathBuf>,
    /// Table of precomputed test statistics instead of a sample.
    #[arg(long)]
    pub stats: Option<std::path::PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub report: std::path::PathBuf,
    #[arg(long)]
    pub report_csv: Option<std::path::PathBuf>,
    #[arg(long)]
    pub dot: Option<std::path::PathBuf>,
    #[arg(long, value_parser = positive, default_value_t = 5.0)]
    pub width_scale: f64,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[command(flatten)]
    pub testing: TestingArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CoverageArgs {
    #[arg(long, default_value_t = 0.7)]
    pub phi: f64,
    #[arg(short, long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, value_parser = quantile, default_value_t = 0.95)]
    pub level: f64,
    /// Radius quantile for the TPDM estimate (top 2% by default).
    #[arg(long, value_parser = quantile, default_value_t = 0.98)]
    pub radial_quantile: f64,
    #[arg(long, value_parser = quantile, default_value_t = 0.98)]
    pub res_quantile: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = MassArg::Estimate)]
    pub mass: MassArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: std::path::PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// JSON report written by `ptc-test`.
    #[arg(long, required_unless_present = "stats", conflicts_with = "stats")]
    pub report: Option<std::path::PathBuf>,
    /// Table of test statistics.
    #[arg(long)]
    pub stats: Option<std::path::PathBuf>,
    /// Critical value; overrides the report's own.
    #[arg(long, value_parser = critical)]
    pub critical: Option<CriticalMethod>,
    #[arg(long, value_parser = quantile, default_value_t = 0.05)]
    pub alpha: f64,
    /// DOT output; written to stdout when absent.
    #[arg(long)]
    pub dot: Option<std::path::PathBuf>,
    /// Adjacency JSON output.
    #[arg(long)]
    pub json: Option<std::path::PathBuf>,
    #[arg(long, value_parser = positive, default_value_t = 5.0)]
    pub width_scale: f64,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<tailgraph::Error> for Failure {
    fn from(e: tailgraph::Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::usage(format!("{THREADS_VAR}={raw:?} must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot configure {n} threads: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Tpdm(a) => commands::tpdm(a),
        Command::PtcTest(a) => commands::ptc_test(a),
        Command::Coverage(a) => commands::coverage(a),
        Command::Graph(a) => commands::graph(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tailgraph: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
