//! Command-line interface.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 numeric failure
//! (training divergence, failed gradient check).

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Precision, Preset, RunArgs, RunConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "infostat", version, about = "Information-status classification of noun-phrase mentions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus and print its label histogram.
    GenSynthetic {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 50)]
        docs: usize,
        #[arg(long, default_value_t = 20)]
        sentences: usize,
        #[arg(long, default_value_t = 2)]
        mentions_per_sentence: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a vocabulary file from a corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train on a whole corpus and write a checkpoint directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Use this vocabulary instead of building one from the corpus.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Predict every mention of a corpus with a trained checkpoint.
    Predict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Prediction exchange file (JSON lines).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Document-level k-fold cross-validation with a pooled report.
    Crossval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Folds trained concurrently; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare analytic gradients with central differences.
    GradCheck {
        /// Corpus to draw the check batch from; a small synthetic one otherwise.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Entries checked per tensor, drawn at random from the seed.
        #[arg(long, default_value_t = 16, conflicts_with = "all")]
        entries_per_tensor: usize,
        /// Check every entry of every tensor.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Approximate randomization test between two prediction files.
    Sigtest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// accuracy or f1:<label>.
        #[arg(long, default_value = "accuracy")]
        statistic: crate::eval::Statistic,
    },
    /// Write the pseudo sentence of every mention as JSON lines.
    DumpPseudo {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Numeric(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynthetic {
            seed,
            docs,
            sentences,
            mentions_per_sentence,
            out,
        } => commands::gen_synthetic(seed, docs, sentences, mentions_per_sentence, &out),
        Command::BuildVocab { corpus, out, run } => commands::build_vocab(&corpus, &out, &run),
        Command::Train { corpus, vocab, out, run } => commands::train(&corpus, vocab.as_deref(), &out, &run),
        Command::Predict {
            corpus,
            checkpoint,
            vocab,
            out,
            run,
        } => commands::predict_cmd(&corpus, &checkpoint, &vocab, &out, &run),
        Command::Crossval {
            corpus,
            out,
            k,
            jobs,
            run,
        } => commands::crossval(&corpus, &out, k, jobs, &run),
        Command::GradCheck {
            corpus,
            entries_per_tensor,
            all,
            batch,
            out,
            run,
        } => {
            let limit = (!all).then_some(entries_per_tensor);
            commands::grad_check(corpus.as_deref(), limit, batch, out.as_deref(), &run)
        }
        Command::Sigtest {
            a,
            b,
            rounds,
            seed,
            statistic,
        } => commands::sigtest(&a, &b, rounds, seed, statistic),
        Command::DumpPseudo { corpus, out, run } => commands::dump_pseudo(&corpus, &out, &run),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Input(err) | CliError::Numeric(err)) = &e;
            eprintln!("error: {err:#}");
            e.exit_code()
        }
    }
}
