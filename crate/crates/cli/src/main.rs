//! `edisc`: prepare → embed → fit → diagnose, plus simulate, grad-check and
//! bench.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use edisc::model::ModelKind;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "edisc", version, about = "Diachronic sense change with EDiSC and DiSC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Extract target-word snippets from a lemmatized corpus.
    Prepare(PrepareArgs),
    /// Train GloVe embeddings, or load and align pre-trained ones.
    Embed(EmbedArgs),
    /// Fit EDiSC or DiSC by MCMC.
    Fit(FitArgs),
    /// Fit sense prevalence to observed sense labels.
    LabelledFit(LabelledFitArgs),
    /// Report diagnostics from chain files.
    Diagnose(DiagnoseArgs),
    /// Simulate a labelled dataset from the model.
    Simulate(SimulateArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
    /// Time MALA iterations over a grid of V and D.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// Flat `key = value` file; keys are long flag names.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; chains run in parallel when above 1.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus: `doc_id TAB genre TAB time TAB lemmas`.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 14)]
    pub window: usize,
    #[arg(long = "min-count", default_value_t = 10)]
    pub min_count: u64,
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    #[arg(long = "G")]
    pub genres: Option<usize>,
    #[arg(long = "T")]
    pub times: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: Common,
    /// Snippet file whose vocabulary the embeddings cover.
    #[arg(long, value_name = "FILE")]
    pub snippets: Option<PathBuf>,
    /// Corpus to train on.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Pre-trained vectors to align instead of training.
    #[arg(long, value_name = "FILE")]
    pub load: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long = "x-max", default_value_t = 100.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Hmc,
    Mala,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_kind, default_value = "edisc")]
    pub kind: ModelKind,
    #[arg(long = "K", default_value_t = 3)]
    pub senses: usize,
    /// Expected embedding dimension; checked against the file.
    #[arg(long = "M")]
    pub embed_dim: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub snippets: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Override the embedding scale `c` (median squared distance by default).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_enum, default_value_t = Sampler::Hmc)]
    pub sampler: Sampler,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long = "temper-iters", default_value_t = 0)]
    pub temper_iters: usize,
    /// Last tuning iteration; half the run by default.
    #[arg(long = "tune-stop")]
    pub tune_stop: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct LabelledFitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fully labelled snippet file.
    #[arg(long, value_name = "FILE")]
    pub snippets: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long = "temper-iters", default_value_t = 0)]
    pub temper_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Chain files from `fit` or `labelled-fit`.
    #[arg(value_name = "CHAIN", required = true)]
    pub chains: Vec<PathBuf>,
    /// Snippets the chains were fitted to; enables sense probabilities and
    /// Brier scores.
    #[arg(long, value_name = "FILE")]
    pub snippets: Option<PathBuf>,
    /// `truth.json` from `simulate`; enables HPD coverage of the true values.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// Chain whose HPD regions are tested by Savage-Dickey Bayes factors.
    #[arg(long, value_name = "FILE")]
    pub region: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long = "top-words", default_value_t = 10)]
    pub top_words: usize,
    #[arg(long = "prior-sims", default_value_t = 1_000_000)]
    pub prior_sims: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_kind, default_value = "edisc")]
    pub kind: ModelKind,
    #[arg(long = "K", default_value_t = 3)]
    pub senses: usize,
    #[arg(long = "M", default_value_t = 25)]
    pub embed_dim: usize,
    #[arg(long = "V", default_value_t = 200)]
    pub vocab: usize,
    #[arg(long = "T", default_value_t = 5)]
    pub times: usize,
    #[arg(long = "G", default_value_t = 1)]
    pub genres: usize,
    /// Maximum snippet length.
    #[arg(long = "L", default_value_t = 14)]
    pub window: usize,
    /// Snippets in every (genre, time) cell, unless `--counts` is given.
    #[arg(long = "per-cell", default_value_t = 100)]
    pub per_cell: usize,
    /// Whitespace-separated snippet counts, row-major over (genre, time).
    #[arg(long, value_name = "FILE")]
    pub counts: Option<PathBuf>,
    /// Embeddings to simulate EDiSC with; random Gaussian vectors otherwise.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_kind, num_args = 1.., default_values = ["edisc", "disc"])]
    pub kind: Vec<ModelKind>,
    #[arg(long = "K", default_value_t = 3)]
    pub senses: usize,
    #[arg(long = "M", default_value_t = 5)]
    pub embed_dim: usize,
    #[arg(long = "V", default_value_t = 30)]
    pub vocab: usize,
    #[arg(long = "T", default_value_t = 4)]
    pub times: usize,
    #[arg(long = "G", default_value_t = 2)]
    pub genres: usize,
    #[arg(long = "D", default_value_t = 40)]
    pub snippets: usize,
    #[arg(long, num_args = 1.., default_values_t = [0.0, 0.3, 1.0])]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Grid axes such as `V=500,1000,2000 D=1000,4000`.
    #[arg(long, num_args = 1.., default_values = ["V=500,1000,2000", "D=1000,4000"])]
    pub grid: Vec<String>,
    /// Models such as `disc edisc:25 edisc:200`.
    #[arg(long, num_args = 1.., default_values = ["disc", "edisc:25", "edisc:200"])]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long = "K", default_value_t = 3)]
    pub senses: usize,
    #[arg(long = "T", default_value_t = 5)]
    pub times: usize,
    #[arg(long = "L", default_value_t = 14)]
    pub window: usize,
    /// Also compare phi ESS per hour of DiSC and EDiSC.
    #[arg(long)]
    pub ess: bool,
    #[arg(long = "ess-iters", default_value_t = 2000)]
    pub ess_iters: usize,
    #[arg(long = "ess-V", default_value_t = 1000)]
    pub ess_vocab: usize,
    #[arg(long = "ess-D", default_value_t = 3700)]
    pub ess_snippets: usize,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: edisc::Error| e.to_string())
}

fn main() -> ExitCode {
    let argv: Vec<_> = std::env::args_os().collect();
    let argv = match config::merge(&Cli::command(), argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
