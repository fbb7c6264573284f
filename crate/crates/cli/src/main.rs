//! `semshift`: lexical semantic change detection over token-embedding stores.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semshift::config::Language;
use semshift::detect::{Metric, Strategy};
use semshift::graph::Format;
use semshift::ranking::Grouping;
use semshift::xlingual::Pairing;

use crate::config::{parse_grouping, parse_pairing, RunConfig};

/// Why a run failed. Usage problems exit with 1, data problems with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }
}

impl From<semshift::Error> for Failure {
    fn from(e: semshift::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "semshift", version, about = "Detect lexical semantic change from contextual token embeddings")]
struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "SEMSHIFT_THREADS")]
    threads: Option<usize>,

    /// Language preset: en, de, la or sv. Defaults to the store's language tag.
    #[arg(long, global = true)]
    lang: Option<Language>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct StorePair {
    /// Store directory of the earlier period.
    #[arg(long)]
    store_t0: Option<PathBuf>,
    /// Store directory of the later period.
    #[arg(long)]
    store_t1: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct SecondLanguage {
    /// Earlier-period store of the second language.
    #[arg(long)]
    l2_store_t0: Option<PathBuf>,
    /// Later-period store of the second language.
    #[arg(long)]
    l2_store_t1: Option<PathBuf>,
    /// Target word in the second language.
    #[arg(long)]
    word_l2: Option<String>,
    /// Preset of the second language. Defaults to its store's language tag.
    #[arg(long)]
    lang_l2: Option<Language>,
    /// Cross-lingual consistency threshold.
    #[arg(long)]
    t_cs: Option<f64>,
    /// Pairing of changed senses across languages: greedy or optimal.
    #[arg(long, value_parser = parse_pairing)]
    pairing: Option<Pairing>,
}

/// Overrides of the language preset.
#[derive(Args, Debug, Clone, Default)]
struct Params {
    /// First-pass clustering threshold.
    #[arg(long)]
    t0_sc: Option<f64>,
    /// Second-pass clustering threshold.
    #[arg(long)]
    t1_sc: Option<f64>,
    /// Sense similarity threshold for detection and grouping.
    #[arg(long)]
    t_sc: Option<f64>,
    /// Neighbors per sense.
    #[arg(long)]
    k: Option<usize>,
    /// First-pass pruning size.
    #[arg(long)]
    t0_low: Option<usize>,
    /// Second-pass pruning size.
    #[arg(long)]
    t1_low: Option<usize>,
    /// Minimum tokens for a neighbor candidate.
    #[arg(long)]
    min_tokens: Option<usize>,
    /// neighbor_based, centroid_cosine or centroid_euclidean.
    #[arg(long)]
    metric: Option<Metric>,
    /// time_dependent or time_independent.
    #[arg(long)]
    strategy: Option<Strategy>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GraphKindArg {
    Tree,
    Temporal,
    Spatiotemporal,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Binary,
    Graded,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SynthKind {
    /// Twenty words with planted gains and losses, plus binary gold labels.
    Benchmark,
    /// Words with a growing share of a new sense, plus graded gold scores.
    Ranking,
    /// A labeled dev set for `tune`.
    Devset,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binary change decision per word: `word, changed, gained, lost` TSV.
    Detect {
        #[command(flatten)]
        stores: StorePair,
        /// File with one target word per line. Defaults to every shared word.
        #[arg(long)]
        words: Option<PathBuf>,
        #[command(flatten)]
        params: Params,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graded change scores: `word, score` TSV, highest first.
    Rank {
        #[command(flatten)]
        stores: StorePair,
        #[arg(long)]
        words: Option<PathBuf>,
        #[command(flatten)]
        params: Params,
        /// single-link or clique.
        #[arg(long, value_parser = parse_grouping)]
        grouping: Option<Grouping>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-lingual comparison of one word pair, as JSON.
    Compare {
        #[command(flatten)]
        stores: StorePair,
        /// Target word in the first language.
        #[arg(long)]
        word: String,
        #[command(flatten)]
        l2: SecondLanguage,
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Semantic graph of a word as JSON or DOT.
    Graph {
        #[arg(long, value_enum, default_value = "temporal")]
        kind: GraphKindArg,
        /// json or dot.
        #[arg(long, default_value = "json")]
        format: Format,
        #[arg(long)]
        word: String,
        #[command(flatten)]
        stores: StorePair,
        #[command(flatten)]
        l2: SecondLanguage,
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search of the clustering thresholds on a labeled dev set.
    Tune {
        /// Dev-set JSON: word -> {labels, store_ref}.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        t0_low: Option<usize>,
        #[arg(long)]
        t1_low: Option<usize>,
        /// First-pass grid as lo:hi:step (inclusive).
        #[arg(long)]
        grid_t0: Option<String>,
        /// Second-pass grid as lo:hi:step (inclusive).
        #[arg(long)]
        grid_t1: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold labels.
    Eval {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// binary: accuracy; graded: Spearman correlation.
        #[arg(long, value_enum, default_value = "binary")]
        task: Task,
    },
    /// Write synthetic stores with known answers.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        /// Random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a store directory for integrity.
    Validate {
        /// Store directory.
        #[arg(long)]
        store: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let threads = config::pick(&cli.threads, &cfg.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot start {threads} threads: {e}")))?;
    let ctx = commands::Ctx { cfg, lang: cli.lang };
    commands::dispatch(&ctx, cli.command)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `semshift --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
