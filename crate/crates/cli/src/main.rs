//! `transitory`: batch experiments for the transitory queue. Each
//! subcommand writes one CSV (or SVG) file into the output directory.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TRANSITORY_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] transitory::Error),
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Model(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "transitory", version, about = "Large deviations of the transitory RS/GI/1 queue")]
pub struct Cli {
    /// JSON experiment configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config `output_dir`, then $TRANSITORY_OUT, then `out`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample workload paths `W(t) = W_⌊nt⌋` with the fluid overlay.
    Simulate(SimulateArgs),
    /// Tabulate a rate function.
    #[command(subcommand)]
    Rate(RateCommand),
    /// Exact probabilities.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Monte Carlo tail estimates.
    #[command(subcommand)]
    Mc(McCommand),
    /// Empirical decay rate `-ln p / n` against the rate function.
    LdpSlope(SlopeArgs),
    /// Large-deviation bound on `P(W(t) > w)` across a time grid.
    Bandwidth(BandwidthArgs),
    /// Render columns of a CSV as SVG polylines.
    Plot(PlotArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Service law, e.g. `exponential:mean=1`, `gamma:shape=2,scale=0.5`,
    /// `deterministic:value=1`, `empirical:0.5@0.8,3@0.2` or JSON.
    #[arg(long)]
    pub service: Option<String>,
    /// Arrival law: `uniform`, `power:exponent=2`, `exponential:rate=3` or JSON.
    #[arg(long)]
    pub arrival: Option<String>,
}

#[derive(Debug, Args)]
pub struct OutputArg {
    /// Output file (default: a per-command name inside the output directory).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Sort,
    ExpoRatio,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub paths: usize,
    /// Number of time points on [0, 1].
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Method::ExpoRatio)]
    pub method: Method,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Subcommand)]
pub enum RateCommand {
    /// Order-statistics rate `I_t(x)`.
    Os(RateArgs),
    /// Offered-load rate `J_t(y)`.
    Offered(RateArgs),
    /// Workload rate over paths with reflected value `y` at time `t`.
    Workload(RateArgs),
    /// Rate of the epoch increments over a partition.
    Increments(IncrementArgs),
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Times, as `a,b,c` or `lo:hi:count`.
    #[arg(long)]
    pub t: Option<String>,
    /// Evaluation points (alias `--y`), same syntax as `--t`.
    #[arg(long, visible_alias = "y", allow_hyphen_values = true)]
    pub x: String,
    /// Path grid size for the workload rate.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Args)]
pub struct IncrementArgs {
    /// Partition points `t_1 < ... < t_d` in (0, 1].
    #[arg(long)]
    pub points: String,
    /// One increment vector per flag, e.g. `--y 0.2,0.3 --y 0.1,0.4`.
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub y: Vec<String>,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact `P(T_(⌊nt⌋) <= a)` for uniform epochs.
    OsTail(OsTailArgs),
}

#[derive(Debug, Args)]
pub struct OsTailArgs {
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub t: Option<String>,
    /// Thresholds.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Subcommand)]
pub enum McCommand {
    /// Estimate a tail probability by crude MC or importance sampling.
    Tail(McArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Event {
    /// `P(W(t) > threshold)`.
    Workload,
    /// `P(T_(⌊nt⌋) <= threshold)`.
    Os,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum McMethod {
    Naive,
    Is,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_enum, default_value_t = Event::Workload)]
    pub event: Event,
    #[arg(long, value_enum, default_value_t = McMethod::Naive)]
    pub method: McMethod,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spacing tilt on the first block.
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    /// Spacing tilt on the remaining block.
    #[arg(long, allow_hyphen_values = true)]
    pub theta1_rest: Option<f64>,
    /// Service tilt.
    #[arg(long, allow_hyphen_values = true)]
    pub theta2: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Source {
    Exact,
    Mc,
    Is,
}

#[derive(Debug, Args)]
pub struct SlopeArgs {
    /// Only the order-statistics event is supported.
    #[arg(long, default_value = "os")]
    pub event: String,
    #[arg(long, value_enum, default_value_t = Source::Exact)]
    pub source: Source,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    /// Buffer level.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    /// Target overflow probability.
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n: Option<usize>,
    /// Time grid.
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutputArg,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column for the horizontal axis.
    #[arg(long)]
    pub x: String,
    /// Columns for the vertical axis, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub y: Vec<String>,
    /// Column whose distinct values split rows into separate curves.
    #[arg(long)]
    pub group: Option<String>,
    #[command(flatten)]
    pub out: OutputArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
