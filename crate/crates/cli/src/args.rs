use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const OUT_DIR_ENV: &str = "CONSENSUS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "consensus", version, about = "Average consensus over packet-erasure networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral summary, rate thresholds and tail bounds (no simulation).
    Analyze(AnalyzeArgs),
    /// One traced run: trace.jsonl, summary.csv and the usual report files.
    Simulate(ExperimentArgs),
    /// Monte Carlo trials with rate and tail estimates.
    Montecarlo(ExperimentArgs),
    /// Exact second-moment matrix Γ of the uncoded recursion.
    Gamma(GammaArgs),
    /// Proof-oracle suite on seeded repetition runs.
    Verify(VerifyArgs),
    /// Anytime decay measurement of one tree code on a single link.
    CodeBench(CodeBenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Uncoded,
    Repetition,
    Treecode,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
}

/// Flags mirror the experiment configuration; they override `--config`.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator (`path:5`, `grid:3x4`, `er:8:0.4:7`, ...) or graph JSON file.
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Erasure probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Step size, or `auto` for ε*.
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long)]
    pub lambda_bits: Option<usize>,
    /// Coded packets per step.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ensemble_seed: Option<u64>,
    #[arg(long)]
    pub horizon_cap: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `basis:NODE[:SCALE]`, `uniform:SEED[:LO:HI]` or `explicit:V1,V2,...`.
    #[arg(long)]
    pub x0: Option<String>,
    /// Comma-separated R' values for tail estimates at M = rounds.
    #[arg(long, value_delimiter = ',')]
    pub tail_rates: Option<Vec<f64>>,
    /// Leading trials written to runs.csv.
    #[arg(long)]
    pub runs_trials: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub graph: String,
    /// Step size, or `auto` for ε*.
    #[arg(long, default_value = "auto")]
    pub eps: String,
    /// Erasure probability for the repetition bounds and coding-gain check.
    #[arg(long)]
    pub p: Option<f64>,
    /// Anytime exponent for the tree-code bound.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rounds M for the tail bounds.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// R' values at which the bounds are evaluated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7")]
    pub r_prime: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GammaArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long, default_value = "auto")]
    pub eps: String,
    #[arg(long, value_enum, default_value = "symmetric")]
    pub mode: ModeArg,
    #[arg(long)]
    pub p: f64,
    /// Also report E‖x_k − r1‖² for k = 0..=K from the default initial
    /// condition `N e_0`.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Include the full matrix in the output.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 12)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CodeBenchArgs {
    #[arg(long, default_value_t = 16)]
    pub lambda_bits: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub ensemble_seed: u64,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 60)]
    pub horizon: usize,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}
