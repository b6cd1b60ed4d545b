use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vulngraph::config::RunConfig;
use vulngraph::frontend::Relation;
use vulngraph::ggnn::Aggregator;
use vulngraph::readout::ReadoutKind;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "vulngraph", version, about = "Graph-based vulnerability detection for C functions")]
pub struct Cli {
    /// Worker threads for training and evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output; repeat for debug messages.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the code graph of one function.
    Graph(GraphArgs),
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled corpus.
    Eval(EvalArgs),
    /// Train one model per relation plus the composite and compare them.
    Ablate(AblateArgs),
    /// Score function files with a checkpoint.
    Predict(PredictArgs),
    /// Write a synthetic labelled corpus as JSONL.
    Synth(SynthArgs),
}

/// Comma-separated list parsed as one flag value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct List<T>(pub Vec<T>);

fn parse_relations(s: &str) -> Result<List<Relation>, String> {
    s.split(',').map(|r| r.parse::<Relation>().map_err(|e| e.to_string())).collect::<Result<_, _>>().map(List)
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown aggregator {s:?}, expected sum, mean, max or concat"))
}

fn parse_hidden(s: &str) -> Result<List<usize>, String> {
    if s.trim().is_empty() {
        return Ok(List(Vec::new()));
    }
    s.split(',').map(|v| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"))).collect::<Result<_, _>>().map(List)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

/// Run configuration: preset, then the JSON file, then individual flags.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Base configuration JSON.
    #[arg(long, env = "DEVIGN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Built-in defaults used when no configuration file is given.
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d_code: Option<usize>,
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long)]
    pub time_steps: Option<usize>,
    /// Comma-separated relation names, e.g. `ast,cfg`.
    #[arg(long, value_parser = parse_relations)]
    pub relations: Option<List<Relation>>,
    #[arg(long)]
    pub reverse_edges: Option<bool>,
    #[arg(long, value_parser = parse_aggregator)]
    pub aggregator: Option<Aggregator>,
    #[arg(long)]
    pub concat_projection: Option<bool>,
    #[arg(long)]
    pub readout: Option<ReadoutKind>,
    #[arg(long)]
    pub conv_channels: Option<usize>,
    /// Comma-separated hidden layer sizes of the output MLPs.
    #[arg(long, value_parser = parse_hidden)]
    pub mlp_hidden: Option<List<usize>>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub mask_padding: Option<bool>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub finetune_embeddings: Option<bool>,
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = &$args.$field { $cfg.$field = v.clone(); })*
    };
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                RunConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => match self.preset {
                Preset::Desk => RunConfig::desk(),
                Preset::Full => RunConfig::full(),
            },
        };
        let args = self;
        override_fields!(
            cfg, args, seed, d_code, z, time_steps, reverse_edges, aggregator, concat_projection, readout,
            conv_channels, m_max, mask_padding, lambda, learning_rate, batch_size, patience, max_epochs,
            train_fraction, finetune_embeddings,
        );
        if let Some(List(r)) = &self.relations {
            cfg.relations = r.clone();
        }
        if let Some(List(h)) = &self.mlp_hidden {
            cfg.mlp_hidden = h.clone();
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// C source file holding one function.
    pub input: PathBuf,
    /// Graph JSON output.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Graphviz output.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Relations to export (default: all six).
    #[arg(long, value_parser = parse_relations)]
    pub relations: Option<List<Relation>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSONL corpus.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Subsample to this fraction of vulnerable functions first.
    #[arg(long)]
    pub positive_rate: Option<f64>,
    /// Seed of the subsample.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Report JSON output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON array of the seven reports.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Aligned text table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Files with one function each.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// JSON output with one entry per file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub vuln_fraction: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
