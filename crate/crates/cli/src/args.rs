use std::path::PathBuf;

use chipsim::workload::ImageDims;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::parse_image;

#[derive(Debug, Parser)]
#[command(
    name = "chipsim",
    version,
    about = "Near-memory chiplet simulator for multimodal LLM inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one inference and write report.json / report.csv.
    Run(RunArgs),
    /// Compile the mapping plan only and write plan.json.
    Plan(PlanArgs),
    /// Run one experiment per value of a sweep axis.
    Sweep(SweepArgs),
    /// Compare a report against a published baseline or another report.
    Compare(CompareArgs),
    /// Produce the CSV behind one of the standard plots.
    Figdata(FigdataArgs),
    /// List shipped models, platforms and baselines.
    Presets,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Experiment config (JSON). Flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset or model JSON file.
    #[arg(long)]
    pub model: Option<String>,
    /// Hardware preset or platform JSON file.
    #[arg(long)]
    pub hw: Option<String>,
    /// het or dram-only.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub prompt_tokens: Option<u32>,
    /// WIDTHxHEIGHT, or none for a text-only prompt.
    #[arg(long, value_parser = parse_image)]
    pub image: Option<Option<ImageDims>>,
    #[arg(long)]
    pub output_tokens: Option<u32>,
    #[arg(long)]
    pub tile_size: Option<u32>,
    #[arg(long)]
    pub kv_block_tokens: Option<u32>,
    #[arg(long)]
    pub rebalance_period: Option<u32>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a per-kernel event trace.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// seqlen, policy, linkbw or tier.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated values for the axis.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run points one after another instead of in parallel.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// report.json written by `run`.
    #[arg(long)]
    pub report: PathBuf,
    /// Baseline name (see `presets`) or another report.json.
    #[arg(long)]
    pub baseline: String,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Throughput and efficiency of every model against the baselines.
    Fig7,
    /// Latency and energy against output length.
    Fig9,
    /// Heterogeneous placement against DRAM-only.
    Fig10,
}

#[derive(Debug, Args)]
pub struct FigdataArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Comma-separated model presets.
    #[arg(
        long,
        default_value = "fastvlm_0_6b,fastvlm_1_7b,mobilevlm_1_7b,mobilevlm_3b"
    )]
    pub models: String,
    /// Output lengths for fig9.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}
