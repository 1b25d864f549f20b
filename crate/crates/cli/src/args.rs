use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bao", version, about = "Balancing weights for time-varying treatments")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation study and report bias, RMSE and coverage.
    Simulate(SimulateArgs),
    /// Select the balance tolerance by bootstrap.
    Tune(TuneArgs),
    /// Estimate path means and an MSM on a panel.
    Estimate(EstimateArgs),
    /// Balance table and weight summaries for a set of weights.
    Diagnose(DiagnoseArgs),
}

/// Inputs shared by the commands that read a panel.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Panel CSV (`id, z1.., x{t}_{p}.., y[, c1..]`).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Run config JSON, or a bare balance spec.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, env = "BAO_SEED")]
    pub seed: Option<u64>,

    /// Fixed standardized tolerance for every feature; skips tuning.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub study: u8,

    #[arg(long)]
    pub n: usize,

    #[arg(long)]
    pub reps: usize,

    #[arg(long, env = "BAO_SEED")]
    pub seed: Option<u64>,

    /// Comma-separated: bao, gpool, gstrat, lr, lr-stab, lr-trunc, unadj.
    #[arg(long, value_delimiter = ',', default_value = "bao")]
    pub methods: Vec<String>,

    /// Bootstrap resamples per replicate (0 skips intervals).
    #[arg(long)]
    pub bootstrap: Option<usize>,

    /// Run config JSON supplying BAO settings.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,

    /// Full report (per-replicate estimates included) as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,

    /// Directory for the ASMD-vs-CV scatter and its table.
    #[arg(long)]
    pub svg: Option<PathBuf>,

    /// Write replicate 0's panel as CSV.
    #[arg(long)]
    pub data_out: Option<PathBuf>,

    /// With `--data-out`: add missing-at-random dropout, `P(C_t) = expit(-2 + X_t1)`.
    #[arg(long)]
    pub censor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Evaluate,
    Resolve,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: DataArgs,

    /// Comma-separated standardized tolerances.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,

    #[arg(long)]
    pub resamples: Option<usize>,

    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Tuning report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: DataArgs,

    /// additive, cumulative, switch or saturated.
    #[arg(long)]
    pub msm: Option<String>,

    /// bao, gpool, gstrat, lr, lr-stab, lr-trunc or unadj.
    #[arg(long)]
    pub method: Option<String>,

    #[arg(long)]
    pub bootstrap: Option<usize>,

    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,

    /// Per-unit weights CSV (`id, path, weight`); BAO only.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,

    /// Orthogonalized residuals CSV; BAO only.
    #[arg(long)]
    pub residuals_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: DataArgs,

    /// Weights CSV as written by `estimate --weights-out`; BAO weights are
    /// computed when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,

    /// Balance table CSV.
    #[arg(long)]
    pub out: PathBuf,

    /// Weight summary JSON.
    #[arg(long)]
    pub summary: PathBuf,
}
