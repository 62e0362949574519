use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forge_core::Lang;

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Grow and vet a small Old English corpus")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Store directory [default: from settings, else ./forge-store]
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Print machine-readable JSON on stdout
    #[arg(long, global = true)]
    pub json: bool,
    /// Log level for stderr: error, warn, info, debug or trace
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// Settings file with defaults for the global options, seeds and endpoint configs
    #[arg(long, global = true)]
    pub settings: Option<PathBuf>,
    /// Run data-parallel stages on one thread
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import, export and split store contents
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Normalize a fragment file and drop low-quality samples
    Normalize(NormalizeArgs),
    /// Build adaptation datasets
    #[command(subcommand)]
    Prompts(PromptsCmd),
    /// Score hypotheses against references with BLEU, chrF and METEOR
    Eval(EvalArgs),
    /// Translate monolingual ANG fragments to EN and pair them
    Backtranslate(BacktranslateArgs),
    /// Merge human and synthetic pair files
    Merge(MergeArgs),
    /// Run the failure-mode filters over a pair file
    Filter(FilterArgs),
    /// Generate synthetic pairs with the two-agent pipeline
    Generate(GenerateArgs),
    /// Expert review: list, submit, aggregate, export, audit
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Serve the review API (and optionally the review UI)
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LangArg {
    Ang,
    En,
}

impl From<LangArg> for Lang {
    fn from(l: LangArg) -> Self {
        match l {
            LangArg::Ang => Lang::Ang,
            LangArg::En => Lang::En,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Add fragments, pairs and dictionary entries from JSONL files
    Import(ImportArgs),
    /// Write fragments.jsonl, pairs.jsonl and dictionary.jsonl into a directory
    Export {
        /// Destination directory
        #[arg(long)]
        dir: PathBuf,
    },
    /// Split item ids into train, validation and test sets
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Fragment records
    #[arg(long)]
    pub fragments: Option<PathBuf>,
    /// Pair records referencing fragment ids
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Dictionary entries
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Directory holding any of fragments.jsonl, pairs.jsonl, dictionary.jsonl
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitUnit {
    Pairs,
    Fragments,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Train, validation and test shares
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    /// Shuffle seed [default: settings seed, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// What to split
    #[arg(long, value_enum, default_value = "pairs")]
    pub of: SplitUnit,
    /// Only fragments in this language (with --of fragments)
    #[arg(long, value_enum)]
    pub lang: Option<LangArg>,
    /// Where to write the split as JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Raw fragment records
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Normalized fragment records that passed the quality check
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Normalization config (flat TOML)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also add the normalized fragments to the store
    #[arg(long)]
    pub import: bool,
}

#[derive(Debug, Subcommand)]
pub enum PromptsCmd {
    /// Render a seeded multi-task dataset from the store
    Build(BuildArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Output JSONL of prompt examples
    #[arg(long)]
    pub out: PathBuf,
    /// Weights for completion, forward, back and definition tasks
    #[arg(long, default_value = "0.25,0.25,0.25,0.25")]
    pub mix: String,
    /// Shuffle seed [default: settings seed, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total number of examples [default: as many as every task can supply]
    #[arg(long)]
    pub total: Option<usize>,
    /// Range of the completion split point as token fractions
    #[arg(long, default_value = "0.3,0.7")]
    pub split_policy: String,
    /// Split file; its validation and test items are held out
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Hypotheses: JSONL of {"id", "text"}
    #[arg(long)]
    pub hyp: PathBuf,
    /// References: JSONL of {"id", "text"}, matched by id
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Language of the texts; selects the METEOR stemmer
    #[arg(long, value_enum, default_value = "ang")]
    pub lang: LangArg,
    /// Maximum BLEU n-gram order
    #[arg(long, default_value_t = 4)]
    pub bleu_order: usize,
    /// chrF character n-gram order
    #[arg(long, default_value_t = 6)]
    pub chrf_order: usize,
    /// Per-segment scores as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Full report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktranslateArgs {
    /// Monolingual ANG fragment records (normalized)
    #[arg(long)]
    pub source: PathBuf,
    /// Endpoint config [default: settings endpoints.backtranslate]
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Emitted pairs
    #[arg(long)]
    pub out: PathBuf,
    /// Job report
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Filter config
    #[arg(long)]
    pub filters: Option<PathBuf>,
    /// Split file; sources in its train set are refused
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Also add the emitted pairs to the store
    #[arg(long)]
    pub import: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DedupArg {
    ExactPair,
    AngText,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Synthetic pairs (e.g. backtranslate output)
    #[arg(long, required = true)]
    pub synthetic: Vec<PathBuf>,
    /// Human pairs [default: human pairs in the store]
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// Shuffle seed [default: settings seed, else 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// What counts as a duplicate
    #[arg(long, value_enum, default_value = "exact-pair")]
    pub dedup: DedupArg,
    /// Merged pairs
    #[arg(long)]
    pub out: PathBuf,
    /// Merge report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Pairs as JSONL of {"id", "en", "ang", "target"}
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Same records with `flags` filled in
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Filter config
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Records to attempt
    #[arg(long)]
    pub count: usize,
    /// Pipeline config [default: settings endpoints.pipeline]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampling seed [default: the config's sample_seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the generated records here as JSONL
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Job report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateArg {
    All,
    Unreviewed,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Average,
    EveryCriterion,
}

#[derive(Debug, Subcommand)]
pub enum ReviewCmd {
    /// List machine-produced records awaiting or past review
    List {
        #[arg(long, value_enum, default_value = "unreviewed")]
        state: StateArg,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = 20)]
        per_page: usize,
    },
    /// Record one reviewer's scores and apply the gate
    Submit(SubmitArgs),
    /// Per-criterion means and the overall mean
    Stats,
    /// Write the ANG side of accepted records as the extended corpus
    Export {
        #[arg(long)]
        out: PathBuf,
        /// Normalization config applied to exported text
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Recheck every stored decision against the gate; exits 1 on violations
    Audit,
    /// Show or change the gate policy
    Policy {
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        #[arg(long)]
        allow_rereview: Option<bool>,
    },
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    /// Record id
    #[arg(long)]
    pub record: String,
    #[arg(long)]
    pub reviewer: String,
    /// Inflection, word order, lexical choice and semantic coherence, 0-10 in half points
    #[arg(long)]
    pub scores: String,
    #[arg(long)]
    pub comment: Option<String>,
    /// Review time in unix seconds [default: now]
    #[arg(long)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on; port 0 picks a free port
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directory with the built review UI
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
