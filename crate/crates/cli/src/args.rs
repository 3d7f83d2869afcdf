use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "propwatch", version, about = "Detect and moderate coordinated propaganda replies in chat channels")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(short = 'o', long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Input files. Each defaults to its conventional name under `--data`.
#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Directory holding corpus.jsonl, labels.jsonl, topics.jsonl and embeddings.tgemb.
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Feeds {
    /// Historical exports (`.json`) or JSONL dumps.
    #[arg(long)]
    pub historical: Vec<PathBuf>,
    /// Real-time JSONL streams.
    #[arg(long)]
    pub realtime: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and merge exports and streams into one corpus.
    Ingest {
        #[command(flatten)]
        feeds: Feeds,
    },
    /// Merge both feeds and mark messages deleted by moderators.
    Diff {
        #[command(flatten)]
        feeds: Feeds,
        /// Labels for the moderation ratios.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Label propagation.
    #[command(subcommand)]
    Label(LabelCommand),
    /// Coordination graph, cohort statistics and vocabulary shift.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Topic clustering and timelines.
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Handcrafted features of every labeled message.
    Features {
        #[command(flatten)]
        inputs: Inputs,
        /// Include unlabeled accounts.
        #[arg(long)]
        all: bool,
    },
    /// Train a single detector.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Train every detector before the cutoff and score it after.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        /// RFC 3339 instant; defaults to the one recorded by `synth`.
        #[arg(long)]
        cutoff: Option<String>,
    },
    /// Time verdicts over reply pairs of a corpus.
    Bench {
        #[command(flatten)]
        inputs: Inputs,
        /// Pair model; defaults to models/pair.model.json under --data.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Look vectors up in the embedding store instead of hashing text.
        #[arg(long)]
        use_store: bool,
    },
    /// Score a live event stream and optionally act on verdicts.
    Serve {
        /// JSONL events from a file, or `-` for stdin.
        #[arg(long, conflicts_with_all = ["listen", "poll"])]
        input: Option<PathBuf>,
        /// Accept JSONL events over TCP at this address.
        #[arg(long, conflicts_with = "poll")]
        listen: Option<String>,
        /// Long-poll the bot API for updates.
        #[arg(long)]
        poll: bool,
    },
    /// Generate a synthetic corpus with planted ground truth.
    Synth {
        /// A smaller corpus for quick runs.
        #[arg(long)]
        small: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum LabelCommand {
    /// Extend seed labels through reuse of long texts.
    Augment {
        #[command(flatten)]
        inputs: Inputs,
        /// Seed labels (JSONL).
        #[arg(long)]
        seeds: PathBuf,
        /// Accounts that must never be labeled, one per line.
        #[arg(long)]
        exclusions: Option<PathBuf>,
        #[arg(long)]
        min_len: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Cohort {
    Propaganda,
    User,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Coordination graph of a cohort and its communities.
    Graph {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Cohort::Propaganda)]
        cohort: Cohort,
        #[arg(long)]
        min_len: Option<usize>,
    },
    /// Account lifespans, effectiveness, text reuse and moderation ratios.
    Stats {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Stems over-represented in propaganda versus user messages.
    Wordshift {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 20)]
        top_k: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Density clustering of message embeddings.
    Cluster {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
        /// Keyword rules (JSON) for messages left as noise.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Messages per topic over time.
    Timeline {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        bin_hours: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MlpInput {
    Reply,
    Trigger,
}

#[derive(Debug, Subcommand)]
pub enum TrainCommand {
    /// Boosted trees over handcrafted features.
    Gbt {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        cutoff: Option<String>,
    },
    /// Network over the reply or the trigger embedding alone.
    Mlp {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        cutoff: Option<String>,
        #[arg(long, value_enum, default_value_t = MlpInput::Reply)]
        input: MlpInput,
    },
    /// Network over trigger and reply embeddings together.
    Pair {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        cutoff: Option<String>,
    },
}
