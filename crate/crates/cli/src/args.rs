use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "lendsim",
    version,
    about = "Threshold lending dynamics: simulation, thresholds, interventions and risk models",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Run file with one `key = value` line per flag and a `command` key.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate both groups under a threshold policy.
    Simulate(SimulateArgs),
    /// Analytic optimal threshold, optionally checked by grid search.
    OptimizeThreshold(OptimizeArgs),
    /// Recommendation grid over (c, r) for one or more equity weights.
    Recommend(RecommendArgs),
    /// Exact absorbing-chain analysis of one agent's walk.
    AnalyzeMarkov(MarkovArgs),
    /// First-order stochastic dominance between two score files.
    DominanceCheck(DominanceArgs),
    /// Draw a Beta sample into a one-column CSV.
    Sample(SampleArgs),
    /// Fit the late-payment model on training loans.
    TrainRisk(TrainArgs),
    /// Score application loans and write per-group repayment probabilities.
    PredictRisk(PredictArgs),
    /// Regenerate the recommendation grids or the maximum-mean curve.
    ReproduceFigure(FigureArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::OptimizeThreshold(_) => "optimize-threshold",
            Command::Recommend(_) => "recommend",
            Command::AnalyzeMarkov(_) => "analyze-markov",
            Command::DominanceCheck(_) => "dominance-check",
            Command::Sample(_) => "sample",
            Command::TrainRisk(_) => "train-risk",
            Command::PredictRisk(_) => "predict-risk",
            Command::ReproduceFigure(_) => "reproduce-figure",
        }
    }
}

pub const SUBCOMMANDS: [&str; 9] = [
    "simulate",
    "optimize-threshold",
    "recommend",
    "analyze-markov",
    "dominance-check",
    "sample",
    "train-risk",
    "predict-risk",
    "reproduce-figure",
];

/// Initial populations: `beta:a,b` (sampled) or `file:path[#column]`.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PopulationArgs {
    #[arg(long, default_value = "beta:4,8")]
    pub dist_a: String,

    #[arg(long, alias = "dist-d", default_value = "beta:3,8")]
    pub dist_b: String,

    /// Sample size for `beta:` populations.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub population: PopulationArgs,

    #[arg(long, default_value_t = 0.1)]
    pub k: f64,

    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    /// Penalty for group A (defaults to `--c`).
    #[arg(long)]
    pub c_a: Option<f64>,

    /// Penalty for group D (defaults to `--c`).
    #[arg(long)]
    pub c_d: Option<f64>,

    /// Universal threshold (defaults to the optimal threshold for `--k`, `--c`).
    #[arg(long)]
    pub beta: Option<f64>,

    #[arg(long)]
    pub beta_a: Option<f64>,

    #[arg(long)]
    pub beta_d: Option<f64>,

    #[arg(long, default_value_t = 20)]
    pub horizon: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also write every agent's score at every step.
    #[arg(long)]
    pub agents: bool,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct OptimizeArgs {
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,

    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    /// Also grid-search the one-step mean at this resolution.
    #[arg(long)]
    pub resolution: Option<f64>,

    /// Population for the grid search (defaults to one agent per grid point).
    #[arg(long)]
    pub dist: Option<String>,

    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridAxes {
    #[arg(long)]
    pub c_min: Option<f64>,
    #[arg(long)]
    pub c_max: Option<f64>,
    #[arg(long)]
    pub c_step: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub r_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub r_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub r_step: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct RecommendArgs {
    /// Equity weights; one grid is written per value.
    #[arg(long, num_args = 1.., required = true)]
    pub alpha: Vec<f64>,

    /// `signed-improvement` or `literal-absolute`.
    #[arg(long, default_value = "signed-improvement")]
    pub efficiency_mode: String,

    #[command(flatten)]
    #[serde(flatten)]
    pub axes: GridAxes,

    #[command(flatten)]
    #[serde(flatten)]
    pub population: PopulationArgs,

    #[arg(long, default_value_t = 0.1)]
    pub k: f64,

    #[arg(long, default_value_t = 20)]
    pub horizon: u64,

    /// Monte Carlo replicates per cell.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Search one threshold per group instead of a universal one.
    #[arg(long)]
    pub per_group_beta: bool,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct MarkovArgs {
    /// Starting score, e.g. `1/2` or `0.5`.
    #[arg(long)]
    pub pi0: String,
    #[arg(long)]
    pub k: String,
    #[arg(long)]
    pub c: String,
    #[arg(long)]
    pub beta: String,
    /// Report the transient mass left after this many steps.
    #[arg(long, default_value_t = 100)]
    pub horizon: u64,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct DominanceArgs {
    /// Score CSV for group A; `path#column` selects a column.
    #[arg(long)]
    pub file_a: String,
    #[arg(long, alias = "file-d")]
    pub file_b: String,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long = "in", value_name = "CSV")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_model: PathBuf,
    /// L2 penalty on the feature coefficients.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in", value_name = "CSV")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_scores: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// Recommended intervention per (c, r) cell, one grid per alpha.
    Grid,
    /// Attainable mean per group as a function of c.
    MaxMean,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct FigureArgs {
    #[arg(long, value_enum)]
    pub which: Figure,

    #[arg(long, num_args = 1.., default_values_t = [0.2, 0.5, 0.8])]
    pub alpha: Vec<f64>,

    #[arg(long, default_value = "signed-improvement")]
    pub efficiency_mode: String,

    /// Defaults to `beta:4,8` for the grid and `beta:8,3` for the curve.
    #[arg(long)]
    pub dist_a: Option<String>,

    /// Defaults to `beta:3,8` for the grid and `beta:7,3` for the curve.
    #[arg(long, alias = "dist-d")]
    pub dist_b: Option<String>,

    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    #[command(flatten)]
    #[serde(flatten)]
    pub axes: GridAxes,

    #[arg(long, default_value_t = 0.1)]
    pub k: f64,

    #[arg(long, default_value_t = 20)]
    pub horizon: u64,

    #[arg(long, default_value_t = 10)]
    pub seeds: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub per_group_beta: bool,

    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}
