//! `milco`: encode, index, search, evaluate and train from the command line.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or input error, 3 training
//! divergence.

mod commands;
mod fail;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "milco", version, about = "Dual-view learned sparse retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Write vocabularies, fresh parameters and a synthetic retrieval corpus.
    Init(InitArgs),
    /// Encode an `id<TAB>text` corpus into JSONL representations.
    Encode(EncodeArgs),
    /// Build a binary index from JSONL representations.
    Index(IndexArgs),
    /// Retrieve the top documents for every query representation.
    Search(SearchArgs),
    /// Score a run against relevance judgments.
    Eval(EvalArgs),
    /// Print the heaviest terms of one representation.
    Inspect(InspectArgs),
    /// Run a training stage or the ablation matrix on synthetic data.
    Train(TrainArgs),
}

#[derive(Args, Serialize)]
pub struct VocabArgs {
    #[arg(long)]
    pub english_vocab: PathBuf,
    #[arg(long)]
    pub source_vocab: PathBuf,
}

#[derive(Args, Serialize)]
pub struct InitArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the frozen toy encoder.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
}

#[derive(Args, Serialize)]
pub struct IndexArgs {
    #[arg(long)]
    pub reprs: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// none | topk:<k> | mass:<p>:<count|weight>
    #[arg(long, default_value = "none")]
    pub prune: String,
}

#[derive(Args, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub top_n: usize,
    /// Pruning applied to each query before retrieval.
    #[arg(long, default_value = "none")]
    pub prune_query: String,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "milco")]
    pub tag: String,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated, e.g. `ndcg@10,recall@100`.
    #[arg(long, default_value = "ndcg@10,recall@100")]
    pub metrics: String,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub reprs: PathBuf,
    #[command(flatten)]
    pub vocab: VocabArgs,
    #[arg(long)]
    pub id: String,
    #[arg(long, short, default_value_t = 10)]
    pub m: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Sap,
    Sct,
    Ablation,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub mode: TrainMode,
    /// JSON training config; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Starting parameters for `sct`; fresh parameters when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
