//! `qpart` command line: calibration reports, free and rejection sampling,
//! enumeration, validation suites and limit-shape data.
//!
//! Exit codes: 0 success, 1 Void verdict or failed validation, 2 usage or
//! parameter errors, 3 I/O failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qpart", version, about = "Boltzmann sampling of strict partitions into q-th powers")]
pub struct Cli {
    /// Worker threads for batch work. Output bytes do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boltzmann parameters, exact moments and part-size cutoffs.
    Calibrate(CalibrateArgs),
    /// Free Boltzmann samples as CSV or JSON.
    Sample(SampleArgs),
    /// One censored rejection run for a fixed weight and length.
    Reject(RejectArgs),
    /// Count or list partitions, or tabulate counts.
    Enumerate(EnumerateArgs),
    /// Run a validation suite and write a JSON report.
    Validate(ValidateArgs),
    /// Mean scaled Young diagram against the limit shape, as CSV.
    Shape(ShapeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Crude,
    Corrected,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Fixed,
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    T1,
    T2,
    T3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    FixedM,
    GrowingM,
    Uniformity,
    Moments,
    All,
}

/// Real number, scientific notation allowed.
fn parse_real(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

/// Nonnegative integer; "1e6" style input is accepted when it is integral.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let x = parse_real(s)?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("'{s}' is not a nonnegative integer"))
    }
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let v = parse_count(s)?;
    u32::try_from(v).map_err(|_| format!("'{s}' is too large"))
}

#[derive(Debug, Args)]
pub struct Targets {
    /// Power of the parts.
    #[arg(long, value_parser = parse_u32)]
    pub q: u32,
    /// Target expected weight ⟨N⟩.
    #[arg(long = "N", value_parser = parse_real)]
    pub big_n: f64,
    /// Target expected length ⟨M⟩.
    #[arg(long = "M", value_parser = parse_real)]
    pub big_m: f64,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub targets: Targets,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Confidence tolerance for the part-size cutoffs L and L0.
    #[arg(long, value_parser = parse_real)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = RegimeArg::Fixed)]
    pub regime: RegimeArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub targets: Targets,
    #[arg(long, value_parser = parse_count, default_value_t = 1)]
    pub count: u64,
    #[arg(long, env = "QPART_SEED", value_parser = parse_count, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for the largest-part cutoff.
    #[arg(long, value_parser = parse_real, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = RegimeArg::Fixed)]
    pub regime: RegimeArg,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct RejectArgs {
    #[arg(long, value_parser = parse_u32)]
    pub q: u32,
    /// Target weight.
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    /// Target length.
    #[arg(long, value_parser = parse_u32)]
    pub m: u32,
    /// Width factor of the accepted weight range [n, θn].
    #[arg(long, value_parser = parse_real, default_value_t = 1.0)]
    pub theta: f64,
    /// Confidence tolerance of the censoring limit.
    #[arg(long, value_parser = parse_real, default_value_t = 0.1)]
    pub delta: f64,
    /// Use the cardinality-informed censoring limits (q = 1, 2).
    #[arg(long)]
    pub corrected: bool,
    /// Task kind; defaults to t1 for θ = 1 and t3 otherwise.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, env = "QPART_SEED", value_parser = parse_count, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long, value_parser = parse_u32)]
    pub q: u32,
    /// Weight of the partitions to list.
    #[arg(long, value_parser = parse_count, requires = "m")]
    pub n: Option<u64>,
    /// Length of the partitions to list.
    #[arg(long, value_parser = parse_u32, requires = "n")]
    pub m: Option<u32>,
    /// Print only the number of partitions.
    #[arg(long)]
    pub count_only: bool,
    /// Tabulate counts for all weights up to this bound.
    #[arg(long, value_parser = parse_count, requires = "max_m", conflicts_with = "n")]
    pub max_n: Option<u64>,
    /// Tabulate counts for all lengths up to this bound.
    #[arg(long, value_parser = parse_u32, requires = "max_n")]
    pub max_m: Option<u32>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    #[arg(long, value_parser = parse_u32)]
    pub q: u32,
    #[arg(long = "N", value_parser = parse_real)]
    pub big_n: Option<f64>,
    #[arg(long = "M", value_parser = parse_real)]
    pub big_m: Option<f64>,
    /// Weight of the uniformity target.
    #[arg(long, value_parser = parse_count)]
    pub n: Option<u64>,
    /// Length of the uniformity target.
    #[arg(long, value_parser = parse_u32)]
    pub m: Option<u32>,
    #[arg(long, value_parser = parse_count, default_value_t = 10_000)]
    pub count: u64,
    #[arg(long, env = "QPART_SEED", value_parser = parse_count, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Family-wise significance level of the suite.
    #[arg(long, value_parser = parse_real, default_value_t = 0.01)]
    pub alpha: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[command(flatten)]
    pub targets: Targets,
    #[arg(long, value_parser = parse_count, default_value_t = 100)]
    pub count: u64,
    #[arg(long, env = "QPART_SEED", value_parser = parse_count, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_real, default_value_t = 0.01)]
    pub grid_step: f64,
    /// Right end of the grid; by default where the limit shape drops below 1e-4.
    #[arg(long, value_parser = parse_real)]
    pub x_max: Option<f64>,
    #[arg(long, value_parser = parse_real, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
