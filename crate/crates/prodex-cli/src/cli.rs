//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Producer-side interleaving experiments: merge counterfactual slates,
/// compute position kernels, audit unbiasedness, simulate readouts.
#[derive(Debug, Parser)]
#[command(name = "prodex", version, about, max_term_width = 100)]
pub struct Cli {
    /// Subcommand to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Exit codes: 0 on success (and passing checks), 1 when a check fails,
/// 2 on usage or config errors.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one experiment realization and write the merged slate as CSV.
    Merge(MergeArgs),
    /// Compute position kernels (and convolved attention) as CSV.
    Kernels(KernelsArgs),
    /// Audit kernels for arm-invariance and dominance ordering.
    Check(CheckArgs),
    /// Replay the experiment many times and summarize both arms' readouts.
    Simulate(SimulateArgs),
}

/// How kernels are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Exact enumeration of assignments and coin outcomes.
    Exact,
    /// Monte Carlo estimation (see `--samples`).
    Mc,
}

/// Long-format plot datasets (`series,x,y`) for the bundled figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Plot {
    /// Control-arm kernel of every source position.
    KernelProfile,
    /// Control-arm kernel of one source position across a grid of control
    /// shares (0.5, 0.7, 0.9, 0.99); always computed exactly.
    SplitSweep,
    /// Step-attention convolutions of the control arm.
    StepAttention,
}

/// Output format of `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Per-arm statistics CSV.
    Csv,
    /// Full JSON report (scenario echo, seed, statistics, analytic values).
    Json,
}

/// Arguments of `prodex merge`.
#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config's `seed`, defaults to 0. The
    /// realization drawn equals replication 0 of `simulate`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's merge strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Arguments of `prodex kernels`.
#[derive(Debug, Args)]
pub struct KernelsArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Exact enumeration or Monte Carlo estimation.
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    /// Monte Carlo sample count (`--mode mc` only; default 100000).
    #[arg(long)]
    pub samples: Option<u64>,
    /// Master seed for Monte Carlo mode; overrides the config's `seed`,
    /// defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's merge strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Emit one plot dataset instead of the kernel and attention tables.
    #[arg(long, value_enum)]
    pub plot: Option<Plot>,
    /// Source position for `--plot split-sweep`; defaults to the middle
    /// position.
    #[arg(long)]
    pub source: Option<usize>,
    /// Write output here instead of stdout. Without `--plot`, the
    /// convolved attention table goes to a sibling file with an
    /// `_attention` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Arguments of `prodex check`.
#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Largest per-cell kernel deviation accepted as arm-invariant.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Exact enumeration or Monte Carlo estimation.
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    /// Monte Carlo sample count (`--mode mc` only; default 100000).
    #[arg(long)]
    pub samples: Option<u64>,
    /// Master seed for Monte Carlo mode; overrides the config's `seed`,
    /// defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's merge strategy.
    #[arg(long)]
    pub strategy: Option<String>,
}

/// Arguments of `prodex simulate`.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Replication count; overrides the config's `replications`, defaults
    /// to 100000. At least 2.
    #[arg(long)]
    pub replications: Option<u64>,
    /// Master seed; overrides the config's `seed`, defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Override the config's merge strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Write the artifact here instead of stdout; the human summary then
    /// goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
