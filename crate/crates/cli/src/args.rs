use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "memreward", version, about = "Episodic-memory intrinsic rewards: simulate, serve, inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the GRPO simulator and write per-seed metrics.
    Simulate(SimulateArgs),
    /// Run the HTTP reward sidecar.
    Serve(ServeArgs),
    /// Print a memory snapshot, optionally with the top-K neighbours of a query.
    Inspect(InspectArgs),
    /// Diversity score of a set of responses.
    Diversity(DiversityArgs),
    /// Turn simulate output into tidy CSV for plotting.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
    Both,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file of flag values; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON task spec (dimension, queries, candidates, sparsity, ...).
    #[arg(long)]
    pub task_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Number of seeds.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// First seed; seeds run from here upwards.
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Add the memory reward to the outcome reward.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub memory: Switch,
    /// Neighbours retrieved per memory; a comma list runs a sweep.
    #[arg(long = "K", default_value = "1")]
    pub k: String,
    /// Group size.
    #[arg(long = "G", default_value_t = 16)]
    pub g: usize,
    /// Steps before the exploration reward switches on.
    #[arg(long, default_value_t = 50)]
    pub warmup: u64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_e: f64,
    /// Normalization window length.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    /// Memory capacity in queries; defaults to the number of task queries.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Responses kept per query.
    #[arg(long, default_value_t = 100)]
    pub responses_per_query: usize,
    /// Policy learning rate; defaults to the simulator default.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Policy softmax temperature; defaults to the simulator default.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Std of the initial policy weights; defaults to the simulator default.
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    #[arg(long, default_value = "sim-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Snapshot directory or a single memory file.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Query text, encoded with the hash encoder.
    #[arg(long, conflicts_with = "query_vec")]
    pub query_text: Option<String>,
    /// Query vector as comma-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub query_vec: Option<String>,
    #[arg(long = "K", default_value_t = 5)]
    pub k: usize,
    /// Character n-gram length of the hash encoder.
    #[arg(long, default_value_t = 3)]
    pub ngram: usize,
    /// Seed of the hash encoder.
    #[arg(long, default_value_t = 0)]
    pub encoder_seed: u64,
    /// Entries listed when no query is given.
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Semantic,
    Lexical,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSONL: one response per line, either `[numbers]` or
    /// `{"vector": [...], "text": "..."}`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Semantic)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Correctness and format rewards.
    Rewards,
    /// Mean and 95th-percentile response length.
    Lengths,
    /// Normalized exploit/explore components and r_mem.
    Intrinsic,
    /// Success rate and group diversity.
    Success,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A simulate output directory.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
