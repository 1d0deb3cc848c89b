//! `moral-events`: command-line driver for ingestion, training, prediction,
//! evaluation, retrieval inspection and corpus analysis.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use moral_events::Error;

#[derive(Debug, Parser)]
#[command(name = "moral-events", version, about = "Moral event extraction experiments")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed, recorded in every output. Defaults to the config file value or 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus, split it chronologically and write task instances.
    Ingest(commands::IngestArgs),
    /// Tag lexicon mentions in every sentence of a corpus.
    Tag(commands::TagArgs),
    /// Build the lexicon memory from Morality Bank mentions.
    BuildMemory(commands::BuildMemoryArgs),
    /// Encode a scenario bank into a dense retrieval index.
    BuildIndex(commands::BuildIndexArgs),
    /// Word-knowledge pretraining (LM, MV, MWL, MLA).
    PretrainWords(commands::PretrainWordsArgs),
    /// Scenario pretraining (CE, RLM).
    PretrainScenarios(commands::PretrainScenariosArgs),
    /// Task fine-tuning (CE, MWL, MLA).
    Finetune(commands::FinetuneArgs),
    /// Predict task outputs with a model or the dictionary baseline.
    Predict(commands::PredictArgs),
    /// Score predictions against gold instances.
    Evaluate(commands::EvaluateArgs),
    /// Show the top-K scenario pairs for queries.
    Retrieve(commands::RetrieveArgs),
    /// Corpus analyses: event positions, foundation shares, ideology matrices.
    Analyze(commands::AnalyzeArgs),
}

/// Flags that override training settings.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Examples per step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Gradient norm ceiling; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Comma-separated objectives, e.g. `ce,mwl,mla`.
    #[arg(long, value_delimiter = ',')]
    pub objectives: Option<Vec<String>>,
    /// Loss weight as `objective=value`; repeatable.
    #[arg(long = "weight")]
    pub weights: Vec<String>,
    /// Save a checkpoint every N steps.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// `one-minus-alpha` or `neg-log`.
    #[arg(long)]
    pub mwl_form: Option<String>,
    /// Fraction of tokens masked for the LM objective.
    #[arg(long)]
    pub noise_density: Option<f64>,
    /// Mean masked span length for the LM objective.
    #[arg(long)]
    pub mean_span_len: Option<f64>,
}

/// Architecture flags used when a fresh model is initialised.
#[derive(Debug, Clone, Default, Args)]
pub struct ArchFlags {
    /// Hidden size.
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Encoder layers.
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    /// Encoder layer after which the memory is read.
    #[arg(long)]
    pub memory_layer: Option<usize>,
    /// Decoder layers.
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Feed-forward inner size.
    #[arg(long)]
    pub d_ff: Option<usize>,
    /// Maximum input length in tokens.
    #[arg(long)]
    pub max_len: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
