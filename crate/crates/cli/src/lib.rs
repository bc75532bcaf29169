//! Library side of the `synergy` binary: argument parsing, configuration
//! and the four subcommands.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;
pub use config::{RunConfig, SplineConfig};

pub const OUTPUT_DIR_ENV: &str = "SYNERGY_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "synergy", version, about = "Bayesian drug-combination response surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a plate and write samples, summaries and surfaces.
    Fit(FitArgs),
    /// Draw a synthetic plate and its truth grid.
    Simulate(SimulateArgs),
    /// Recompute summaries and surfaces from a samples file.
    Summarize(SummarizeArgs),
    /// Classical reference surfaces and interaction estimates.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = "synergy-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorFamily {
    /// Half-Cauchy on every standard deviation.
    Hc,
    /// Inverse-gamma on every variance.
    Ig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Log10,
    Raw,
}

/// Settings shared by `fit` and `summarize`; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// TOML file with `n_chains`, `[chain]`, `[priors]`, `[spline]`, `[summary]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Covariate scale of the linear interaction terms.
    #[arg(long, value_enum)]
    pub linear_scale: Option<Scale>,
    /// Spline basis size along drug 1.
    #[arg(long)]
    pub k1: Option<usize>,
    /// Spline basis size along drug 2.
    #[arg(long)]
    pub k2: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Plate CSV with header `drug1_conc,drug2_conc,replicate,viability`.
    #[arg(long)]
    pub data: PathBuf,
    /// Truth CSV from `simulate`; enables `mse.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Iteration after which proposals adapt.
    #[arg(long)]
    pub adapt_start: Option<usize>,
    /// Independent chains, run in parallel and concatenated.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Variance hyper-prior family.
    #[arg(long, value_enum)]
    pub prior: Option<PriorFamily>,
    /// Half-Cauchy scale (default 1).
    #[arg(long)]
    pub hc_scale: Option<f64>,
    /// Inverse-gamma shape (default 3).
    #[arg(long)]
    pub ig_shape: Option<f64>,
    /// Inverse-gamma rate (default 2).
    #[arg(long)]
    pub ig_rate: Option<f64>,
    /// Ridge added to the spline difference penalty.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Interaction field: 1 none, 2 high-dose bump, 3 mixed sign.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    #[arg(long, default_value = "normal")]
    pub noise: String,
    #[arg(long, default_value_t = 3)]
    pub nrep: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise scale.
    #[arg(long, default_value_t = synergy_core::simgen::DEFAULT_SIGMA)]
    pub sigma: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `samples.csv` written by `fit`.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One of bliss, hsa, loewe, zip; all four when omitted.
    #[arg(long)]
    pub method: Vec<String>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Fit each replicate separately and average the surfaces.
    #[arg(long)]
    pub per_replicate: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}
