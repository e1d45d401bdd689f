use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weat_core::ProviderKind;

#[derive(Debug, Parser)]
#[command(name = "weat", version, about = "Author worked examples with LLM-generated line explanations")]
pub struct Cli {
    /// Service/CLI config file (TOML)
    #[arg(long, global = true, env = "WEAT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory holding stored examples
    #[arg(long, global = true)]
    pub storage_root: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Seed for study sheet randomization
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Mock,
    Live,
    Replay,
}

impl From<ProviderArg> for ProviderKind {
    fn from(arg: ProviderArg) -> Self {
        match arg {
            ProviderArg::Mock => ProviderKind::Mock,
            ProviderArg::Live => ProviderKind::Live,
            ProviderArg::Replay => ProviderKind::Replay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, import, inspect and annotate stored examples
    #[command(subcommand)]
    Example(ExampleCommand),
    /// Run generation rounds and stage the results for review
    Generate(GenerateArgs),
    /// Merge staged explanations into the example
    Accept(AcceptArgs),
    /// Round-to-round similarity of a generation transcript
    Analyze(AnalyzeArgs),
    /// Comparison study sheets, rating reports and agreement
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write the portable or PCEX document
    Export(ExportArgs),
    /// Run the HTTP authoring service
    Serve(ServeArgs),
}

/// Either a stored example or a portable document on disk.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Target {
    /// Stored example id
    #[arg(long)]
    pub id: Option<String>,
    /// Portable document (.weat.json)
    #[arg(long)]
    pub example: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OriginArg {
    HumanAuthored,
    Generated,
}

#[derive(Debug, Subcommand)]
pub enum ExampleCommand {
    /// Store a new example from a source file
    Create {
        #[arg(long)]
        title: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Source code file
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value = "java")]
        language: String,
        #[arg(long)]
        id: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Store a portable document
    Import {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    Show {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Attach "N: text" explanations from a file
    Annotate {
        #[arg(long)]
        id: String,
        #[arg(long)]
        explanations: PathBuf,
        #[arg(long, value_enum, default_value = "human-authored")]
        origin: OriginArg,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    List {
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub target: Target,
    /// Fixture directory for mock/replay; recording directory for live
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Chat completion endpoint for the live provider
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Where to write the transcript (file mode; default <example>.transcript.json)
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    #[arg(long)]
    pub no_description: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct AcceptArgs {
    #[command(flatten)]
    pub target: Target,
    /// Staged transcript (file mode)
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Output document (file mode; default overwrites --example)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave this line's staged text out (repeatable)
    #[arg(long)]
    pub exclude: Vec<u32>,
    /// With --none, take this line's staged text (repeatable)
    #[arg(long)]
    pub include: Vec<u32>,
    /// Exclude every line unless --include names it
    #[arg(long)]
    pub none: bool,
    /// LINE:LEVEL=TEXT replacement (repeatable)
    #[arg(long)]
    pub edit: Vec<String>,
    /// Selections as JSON; the flags above apply on top
    #[arg(long)]
    pub selections: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct TranscriptSource {
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: TranscriptSource,
    /// Include per-line scores
    #[arg(long)]
    pub lines: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Portable,
    Pcex,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub target: Target,
    #[arg(long, value_enum, default_value = "portable")]
    pub format: ExportFormat,
    /// Output file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on, e.g. 127.0.0.1:8080
    #[arg(long)]
    pub listen: Option<String>,
    /// Built UI assets to serve at /
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextModeArg {
    AllLevels,
    FirstLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    All,
    Completeness,
    Preference,
    MeanStdev,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Build blind comparison sheets and the answer key
    Sheets {
        /// Portable documents carrying generated explanations
        #[arg(long, required = true, num_args = 1..)]
        generated: Vec<PathBuf>,
        /// Portable documents carrying expert explanations, matched by id
        #[arg(long, required = true, num_args = 1..)]
        expert: Vec<PathBuf>,
        /// CSV with an evaluator_id column
        #[arg(long)]
        evaluators: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all-levels")]
        text_mode: TextModeArg,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Completeness, preference and mean/stdev tables
    Report {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        table: TableArg,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Fleiss' kappa over preference answers
    Kappa {
        #[arg(long)]
        ratings: PathBuf,
        /// Un-blind to source preferences first
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Min/max/average of internal correctness ratings
    Internal {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}
