mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

#[derive(Parser)]
#[command(name = "convsr", version, about = "Conversational question answering with structured representations")]
struct Cli {
    /// Worker threads for evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate and split a QuAC-format dataset into a corpus directory.
    Ingest(IngestArgs),
    /// Evaluate one approach and write an evaluation report.
    Eval(EvalArgs),
    /// Label structured representations from rewrites (JSON Lines).
    LabelSr(LabelArgs),
    /// Question statistics next to F1.
    Stats(StatsArgs),
    /// Three-row slot ablation: full, no context entity, no question entity.
    Ablate(AblateArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub quac: PathBuf,
    #[arg(long)]
    pub canard: Option<PathBuf>,
    /// Question_no in the rewrite file counts from 1.
    #[arg(long)]
    pub canard_one_based: bool,
    /// Held-out QuAC file written as the test split.
    #[arg(long)]
    pub test_quac: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

/// Everything that selects and builds one approach.
#[derive(Args, Clone)]
pub struct ApproachArgs {
    #[arg(long, default_value = "convsr")]
    pub mode: String,
    /// none|init|prev|init-prev|all|dynamic (baselines only).
    #[arg(long, default_value = "dynamic")]
    pub policy: String,
    #[arg(long)]
    pub with_sr: bool,
    /// lexical or remote:URL
    #[arg(long, default_value = "lexical")]
    pub reader: String,
    /// oracle, identity or remote:URL
    #[arg(long, default_value = "oracle")]
    pub rewriter: String,
    /// heuristic or remote:URL
    #[arg(long, default_value = "heuristic")]
    pub generator: String,
    /// Use the heuristic generator when the remote one fails.
    #[arg(long)]
    pub generator_fallback: bool,
    #[arg(long, default_value_t = convsr_core::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Keep at most this many selected turns (default: no cap).
    #[arg(long)]
    pub k: Option<usize>,
    /// Always generate representations, skipping the question assessment.
    #[arg(long)]
    pub no_assessment: bool,
    /// Word vectors (`token v1 .. vd` per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Weight term counts by idf before soft cosine.
    #[arg(long)]
    pub idf: bool,
}

#[derive(Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub approach: ApproachArgs,
    #[command(flatten)]
    pub data: CorpusArgs,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Rewrite file; defaults to the rewrites stored with the corpus.
    #[arg(long)]
    pub canard: Option<PathBuf>,
    #[arg(long)]
    pub canard_one_based: bool,
    #[arg(long, default_value = "lexical")]
    pub reader: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    /// Add the row for questions augmented with representations.
    #[arg(long)]
    pub augmented: bool,
    #[arg(long, default_value = "lexical")]
    pub reader: String,
    #[arg(long, default_value_t = convsr_core::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub approach: ApproachArgs,
    #[command(flatten)]
    pub data: CorpusArgs,
    /// Also write the three rows as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Eval(a) => commands::eval(&a, cli.jobs),
        Command::LabelSr(a) => commands::label(&a),
        Command::Stats(a) => commands::stats(&a, cli.jobs),
        Command::Ablate(a) => commands::ablate(&a, cli.jobs),
        Command::Serve(a) => commands::serve(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Failure::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
