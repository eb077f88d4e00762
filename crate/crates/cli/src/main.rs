use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synprune_core::conventions::ConventionCategory;
use synprune_core::evalharness::Ratio;
use synprune_core::pruner::PruneMode;
use synprune_core::scoring::Method;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(
    name = "synprune",
    version,
    about = "Syntax-pruned membership inference for Python code"
)]
struct Cli {
    /// TOML file with defaults for any setting.
    #[arg(long, global = true, env = "SYNPRUNE_CONFIG")]
    config: Option<PathBuf>,
    /// Convention table replacing the shipped one.
    #[arg(long, global = true, env = "SYNPRUNE_CONVENTIONS")]
    conventions: Option<PathBuf>,
    /// `eq4` prunes matched conditions and consequents; `consequents-only` keeps conditions.
    #[arg(long, global = true, env = "SYNPRUNE_PRUNE_MODE", value_parser = parse_from_str::<PruneMode>)]
    prune_mode: Option<PruneMode>,
    /// Write data here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Show each token of a source file with its pruning label.
    Annotate(AnnotateArgs),
    /// Query an inference endpoint for per-token log-probabilities.
    FetchLogprobs(FetchArgs),
    /// Compute SPP and baseline scores.
    Score(ScoreArgs),
    /// Compute metrics from score records.
    Eval(EvalArgs),
    /// SPP AUROC with each convention category removed.
    Ablate(AblateArgs),
    /// F1 across thresholds for one method.
    Sweep(SweepArgs),
    /// Count pruned tokens per convention category.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    pub source: PathBuf,
    /// Use this logprob file's tokens instead of lexer tokens.
    #[arg(long, requires = "sample_id")]
    pub logprobs: Option<PathBuf>,
    #[arg(long)]
    pub sample_id: Option<String>,
    /// Print the source with pruned tokens in [[ ]] instead of JSON lines.
    #[arg(long)]
    pub human: bool,
}

#[derive(Args, Debug)]
pub struct EndpointArgs {
    #[arg(long, env = "SYNPRUNE_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "SYNPRUNE_MODEL")]
    pub model: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Args, Debug)]
pub struct MetricArgs {
    #[arg(long, env = "SYNPRUNE_RATIO", value_parser = parse_from_str::<Ratio>)]
    pub ratio: Option<Ratio>,
    #[arg(long, env = "SYNPRUNE_SEED")]
    pub seed: Option<u64>,
    /// SPP threshold; without it the best-F1 threshold is used.
    #[arg(long, conflicts_with = "sweep")]
    pub epsilon: Option<f64>,
    /// Pick the SPP threshold by F1 sweep.
    #[arg(long)]
    pub sweep: bool,
    /// Short/long boundary in tokens (default: median member length).
    #[arg(long)]
    pub length_threshold: Option<usize>,
    /// Also write the AUROC table as CSV.
    #[arg(long)]
    pub table_csv: Option<PathBuf>,
    /// Also write ROC points as CSV.
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub logprobs: Option<PathBuf>,
    /// Labels for the records; also the sources to fetch when no logprob file is given.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Corpus frequency table for DC-PDD.
    #[arg(long, conflicts_with = "freq_from")]
    pub freq: Option<PathBuf>,
    /// Build the DC-PDD frequency table from this logprob file.
    #[arg(long)]
    pub freq_from: Option<PathBuf>,
    #[arg(long, env = "SYNPRUNE_K")]
    pub k: Option<u32>,
    /// Score with one convention category removed.
    #[arg(long, value_parser = parse_from_str::<ConventionCategory>)]
    pub ablate: Option<ConventionCategory>,
    /// Emit an evaluation report instead of score records.
    #[arg(long)]
    pub eval: bool,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Labels for records that carry none.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long, env = "SYNPRUNE_K")]
    pub k: Option<u32>,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub logprobs: PathBuf,
    #[arg(long)]
    pub benchmark: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long, default_value = "SPP", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, env = "SYNPRUNE_K")]
    pub k: Option<u32>,
    /// Comma-separated thresholds (default: unique scores and midpoints).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Count over lexer tokens of a benchmark file.
    #[arg(long, required_unless_present = "logprobs", conflicts_with = "logprobs")]
    pub benchmark: Option<PathBuf>,
    /// Count over model tokens of a logprob file.
    #[arg(long)]
    pub logprobs: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::ALL
        .into_iter()
        .find(|m| m.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown method `{s}` (expected SPP, Loss, ZLib, Min-K% or DC-PDD)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
