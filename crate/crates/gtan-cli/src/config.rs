//! Key-value run configuration: file plus flag overrides, flags winning.
//!
//! Defaults are the standard training setup (64-wide representations, two
//! propagation layers, two FC layers, Adam at 0.0005, margin 1). Unknown
//! keys are rejected. `GTAN_SEED` overrides the seed and nothing else.

use anyhow::{bail, Context, Result};
use gtan_core::corpus::FilterConfig;
use gtan_core::graph::Normalization;
use gtan_core::model::{AblationConfig, ModelConfig};
use gtan_core::train::TrainConfig;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: usize,
    pub att_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub fc_layers: usize,
    pub normalization: Normalization,
    pub trainable_word_embeddings: bool,
    pub word_vectors: Option<String>,
    pub ablation: AblationConfig,

    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub max_pairs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub eval_parallelism: usize,
    pub ndcg_k: usize,

    pub min_resp_answers: usize,
    pub min_answer_words: usize,
    pub min_answers: usize,
    pub max_answers: usize,
    pub min_word_freq: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let filter = FilterConfig::default();
        Self {
            dim: 64,
            att_dim: 64,
            hidden_dim: 64,
            layers: 2,
            fc_layers: 2,
            normalization: Normalization::None,
            trainable_word_embeddings: false,
            word_vectors: None,
            ablation: AblationConfig::default(),
            margin: train.margin,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            patience: train.patience,
            max_pairs: train.max_pairs,
            batch_size: train.batch_size,
            grad_clip: train.grad_clip,
            seed: train.seed,
            eval_parallelism: train.eval_parallelism,
            ndcg_k: train.ndcg_k,
            min_resp_answers: filter.min_resp_answers,
            min_answer_words: filter.min_answer_words,
            min_answers: filter.min_answers,
            max_answers: filter.max_answers,
            min_word_freq: filter.min_word_freq,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dim" => self.dim = parse(key, value)?,
            "att_dim" => self.att_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "fc_layers" => self.fc_layers = parse(key, value)?,
            "normalization" => {
                self.normalization = Normalization::parse(value)
                    .with_context(|| format!("bad normalization {value:?} (none|row_l1)"))?
            }
            "trainable_word_embeddings" => self.trainable_word_embeddings = parse(key, value)?,
            "word_vectors" => self.word_vectors = (!value.is_empty()).then(|| value.to_string()),
            "ablation" => {
                self.ablation = AblationConfig::from_flags(value)
                    .with_context(|| format!("unknown ablation flag in {value:?}"))?
            }
            "margin" => self.margin = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "max_pairs" => self.max_pairs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "eval_parallelism" => self.eval_parallelism = parse(key, value)?,
            "ndcg_k" => self.ndcg_k = parse(key, value)?,
            "min_resp_answers" => self.min_resp_answers = parse(key, value)?,
            "min_answer_words" => self.min_answer_words = parse(key, value)?,
            "min_answers" => self.min_answers = parse(key, value)?,
            "max_answers" => self.max_answers = parse(key, value)?,
            "min_word_freq" => self.min_word_freq = parse(key, value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), ln + 1))?;
            self.set(key.trim(), value)
                .with_context(|| format!("{}:{}", path.display(), ln + 1))?;
        }
        Ok(())
    }

    /// Applies the `GTAN_SEED` environment override.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var("GTAN_SEED") {
            self.seed = seed
                .parse()
                .with_context(|| format!("GTAN_SEED={seed:?} is not a u64"))?;
        }
        Ok(())
    }

    /// Full effective configuration, loadable back via [`RunConfig::load`].
    pub fn echo(&self) -> String {
        format!(
            "dim = {}\natt_dim = {}\nhidden_dim = {}\nlayers = {}\nfc_layers = {}\n\
             normalization = {}\ntrainable_word_embeddings = {}\nword_vectors = {}\n\
             ablation = {}\nmargin = {}\nlearning_rate = {}\nepochs = {}\npatience = {}\n\
             max_pairs = {}\nbatch_size = {}\ngrad_clip = {}\nseed = {}\n\
             eval_parallelism = {}\nndcg_k = {}\nmin_resp_answers = {}\n\
             min_answer_words = {}\nmin_answers = {}\nmax_answers = {}\nmin_word_freq = {}\n",
            self.dim,
            self.att_dim,
            self.hidden_dim,
            self.layers,
            self.fc_layers,
            self.normalization.as_str(),
            self.trainable_word_embeddings,
            self.word_vectors.as_deref().unwrap_or(""),
            self.ablation.to_flags_string(),
            self.margin,
            self.learning_rate,
            self.epochs,
            self.patience,
            self.max_pairs,
            self.batch_size,
            self.grad_clip,
            self.seed,
            self.eval_parallelism,
            self.ndcg_k,
            self.min_resp_answers,
            self.min_answer_words,
            self.min_answers,
            self.max_answers,
            self.min_word_freq,
        )
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            att_dim: self.att_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            fc_layers: self.fc_layers,
            normalization: self.normalization,
            trainable_word_embeddings: self.trainable_word_embeddings,
            ablation: self.ablation,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.margin,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            patience: self.patience,
            max_pairs: self.max_pairs,
            batch_size: self.batch_size,
            grad_clip: self.grad_clip,
            seed: self.seed,
            eval_parallelism: self.eval_parallelism,
            ndcg_k: self.ndcg_k,
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            min_resp_answers: self.min_resp_answers,
            min_answer_words: self.min_answer_words,
            min_answers: self.min_answers,
            max_answers: self.max_answers,
            min_word_freq: self.min_word_freq,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value for {key}: {value:?} ({e})"))
}
