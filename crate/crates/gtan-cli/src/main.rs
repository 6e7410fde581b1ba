//! Command-line interface for the answer-ranking engine: data preparation,
//! training, evaluation, ablations, ranking with attention explanations,
//! synthetic corpus generation, and gradient checking.

mod commands;
mod config;
mod dataset;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gtan_core::corpus::SyntheticConfig;
use std::path::PathBuf;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "gtan", version, about = "Graph tri-attention answer ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads the run configuration.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Key-value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. `--set epochs=5 --set seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.merge_file(path)?;
        }
        for kv in &self.sets {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            config.set(key.trim(), value)?;
        }
        config.apply_env()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split a raw corpus into a prepared dataset directory.
    Ingest {
        /// Raw corpus file (one question record per line).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a planted-signal synthetic corpus file.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        questions: usize,
        #[arg(long, default_value_t = 5)]
        answers: usize,
        #[arg(long, default_value_t = 150)]
        vocab_size: usize,
        #[arg(long, default_value_t = 20)]
        respondents: usize,
        #[arg(long, default_value_t = 1.0)]
        strength: f64,
        #[arg(long, default_value_t = 1.0)]
        content_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        respondent_weight: f64,
        #[arg(long, default_value_t = 8)]
        question_len: usize,
        #[arg(long, default_value_t = 12)]
        answer_len: usize,
        #[arg(long, default_value_t = 6)]
        topic_words: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Leave timestamps out of the generated records.
        #[arg(long)]
        no_timestamps: bool,
    },
    /// Train on a prepared dataset and write the best checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint (or the vote oracle) on one split.
    Evaluate {
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Score answers by their vote counts: the metric upper bound.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and evaluate the full model and every single-flag ablation.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run a single ablation row instead of the whole table.
        #[arg(long)]
        only: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rank the answers of the questions in a corpus-format file.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Print per-token attention weights for each answer.
        #[arg(long)]
        explain: bool,
        /// Write the question graphs as text edge lists.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare every parameter gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        att_dim: usize,
        #[arg(long, default_value_t = 8)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        fc_layers: usize,
        #[arg(long, default_value_t = 3)]
        answers: usize,
        /// Ablation flags to check, or `all` for the full sweep.
        #[arg(long)]
        ablation: Option<String>,
        /// Also check gradients into the word embedding table.
        #[arg(long)]
        trainable_words: bool,
    },
    /// Quartile similarity analysis of a raw corpus.
    AnalyzeSim {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_word_freq: u64,
    },
    /// Statistics table (and answer-delay histogram) of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { input, out, config } => {
            commands::cmd_ingest(&input, &out, &config.resolve()?)
        }
        Command::GenSynthetic {
            out,
            questions,
            answers,
            vocab_size,
            respondents,
            strength,
            content_weight,
            respondent_weight,
            question_len,
            answer_len,
            topic_words,
            seed,
            no_timestamps,
        } => {
            let mut synthetic = SyntheticConfig {
                num_questions: questions,
                answers_per_question: answers,
                vocab_size,
                respondent_pool: respondents,
                signal_strength: strength,
                content_weight,
                respondent_weight,
                question_len,
                answer_len,
                topic_words,
                with_timestamps: !no_timestamps,
                seed,
            };
            if let Ok(env_seed) = std::env::var("GTAN_SEED") {
                synthetic.seed = env_seed.parse()?;
            }
            commands::cmd_gen_synthetic(&out, &synthetic)
        }
        Command::Train { data, out, config } => {
            commands::cmd_train(&data, &out, &config.resolve()?)
        }
        Command::Evaluate {
            checkpoint,
            data,
            split,
            oracle,
            out,
            config,
        } => commands::cmd_evaluate(
            checkpoint.as_deref(),
            &data,
            &split,
            oracle,
            out.as_deref(),
            &config.resolve()?,
        ),
        Command::Ablate {
            data,
            out,
            only,
            config,
        } => commands::cmd_ablate(&data, &out, only.as_deref(), &config.resolve()?),
        Command::Rank {
            checkpoint,
            data,
            input,
            explain,
            dump_graph,
            config,
        } => commands::cmd_rank(
            &checkpoint,
            &data,
            &input,
            explain,
            dump_graph.as_deref(),
            &config.resolve()?,
        ),
        Command::Gradcheck {
            seed,
            epsilon,
            dim,
            att_dim,
            hidden_dim,
            layers,
            fc_layers,
            answers,
            ablation,
            trainable_words,
        } => commands::cmd_gradcheck(
            seed,
            epsilon,
            dim,
            att_dim,
            hidden_dim,
            layers,
            fc_layers,
            answers,
            ablation.as_deref(),
            trainable_words,
        ),
        Command::AnalyzeSim {
            corpus,
            dim,
            seed,
            min_word_freq,
        } => commands::cmd_analyze_sim(&corpus, dim, seed, min_word_freq),
        Command::Stats { data } => commands::cmd_stats(&data),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
