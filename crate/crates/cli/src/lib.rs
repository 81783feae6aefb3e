//! The `kgchat` command line.

pub mod chat;
mod commands;
pub mod config;
pub mod trace;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "kgchat", version, about = "Knowledge-grounded movie chit-chat")]
pub struct Cli {
    /// File of `key=value` lines supplying defaults for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate and rewrite a knowledge base, or print its statistics.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Train or evaluate TransE embeddings.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Show the attributes and candidate entities collected for a text.
    Collect(CollectArgs),
    /// Train a response model.
    Train(TrainArgs),
    /// Generate responses for every context in a corpus.
    Generate(GenerateArgs),
    /// Talk to a trained model.
    Chat(ChatArgs),
    /// Score generated responses against references.
    Eval(EvalArgs),
    /// Write a synthetic KB, lexicon and corpora.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
pub enum KbCommand {
    Build {
        #[arg(long)]
        kb: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Stats {
        #[arg(long)]
        kb: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum EmbedCommand {
    Train(EmbedTrainArgs),
    Eval {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        emb: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct EmbedTrainArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Per-epoch losses as CSV.
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub topic: String,
    #[arg(long)]
    pub text: String,
    #[arg(long = "no-2he")]
    pub no_2he: bool,
}

#[derive(Args, Debug)]
pub struct AblationFlags {
    /// Candidates are the seed entities only.
    #[arg(long = "no-2he")]
    pub no_2he: bool,
    /// Uniform attention over encoder states.
    #[arg(long = "no-aae")]
    pub no_aae: bool,
    /// Plain GRU decoder without entity copying.
    #[arg(long = "no-ead")]
    pub no_ead: bool,
    #[arg(long = "no-coverage")]
    pub no_coverage: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Corpus used for per-epoch entity precision and recall.
    #[arg(long = "held-out")]
    pub held_out: Option<PathBuf>,
    /// Pretrained TransE file. Without it embeddings are trained first.
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Text word vectors, `word v1 .. vd` per line, to initialize embeddings.
    #[arg(long = "word-vectors")]
    pub word_vectors: Option<PathBuf>,
    /// Where to write the checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Per-epoch metrics CSV; standard output when absent.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.95)]
    pub decay: f64,
    #[arg(long = "batch-size", default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long = "word-dim", default_value_t = 300)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    #[arg(long = "max-vocab", default_value_t = 25000)]
    pub max_vocab: usize,
    #[arg(long = "kg-dim", default_value_t = 100)]
    pub kg_dim: usize,
    #[arg(long = "kg-epochs", default_value_t = 1000)]
    pub kg_epochs: usize,
    #[arg(long = "gate-weight", default_value_t = 1.0)]
    pub gate_weight: f64,
    #[arg(long = "freeze-kg")]
    pub freeze_kg: bool,
    #[command(flatten)]
    pub ablation: AblationFlags,
}

#[derive(Args, Debug)]
pub struct DecodeFlags {
    /// Beam width; 1 is greedy.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long = "max-len", default_value_t = 30)]
    pub max_len: usize,
    /// Print per-step decoder traces.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Conversations whose last turn is replaced by the model's response.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Args, Debug)]
pub struct ChatArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub topic: Option<String>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Write the CSV row here instead of printing it.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Add-epsilon smoothing for n-gram precisions.
    #[arg(long)]
    pub smoothing: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub films: usize,
    #[arg(long, default_value_t = 50)]
    pub conversations: usize,
    #[arg(long = "held-out-films", default_value_t = 10)]
    pub held_out_films: usize,
    #[arg(long = "held-out-conversations", default_value_t = 20)]
    pub held_out_conversations: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match config::config_path(&args) {
        Some(path) => match config::merge(&Cli::command(), args, path.as_ref()) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("error: {e:#}");
                return 1;
            }
        },
        None => args,
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}
