//! Pairwise learning-to-rank training: vote-ordered answer pairs, hinge
//! loss, one Adam step per question, validation-based model selection,
//! and bitwise-exact checkpointing.

mod checkpoint;

pub use checkpoint::{ensure_matches, load_checkpoint, save_checkpoint, CheckpointError};

use crate::corpus::{Corpus, DatasetSplit, Question, TfidfIndex};
use crate::eval::{self, EvalError, MetricReport};
use crate::model::{forward, Model, ModelError, QuestionInstance};
use crate::tensor::{Adam, Tape, TensorError, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training diverged on question {question_id} in epoch {epoch}: loss is not finite")]
    Diverged { question_id: String, epoch: usize },
    #[error("training split is empty")]
    EmptyTrainSplit,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Hinge margin.
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a validation MRR improvement;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Cap on pairs per question; 0 keeps every pair.
    pub max_pairs: usize,
    /// Questions per optimizer step.
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub seed: u64,
    /// Threads for validation scoring (0 = all cores). Training itself is
    /// sequential so runs reproduce bitwise.
    pub eval_parallelism: usize,
    pub ndcg_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 0.0005,
            epochs: 50,
            patience: 10,
            max_pairs: 0,
            batch_size: 1,
            grad_clip: 5.0,
            seed: 42,
            eval_parallelism: 0,
            ndcg_k: 3,
        }
    }
}

/// All ordered answer pairs `(i, j)` with `votes[i] > votes[j]`; ties
/// produce nothing. With `max_pairs > 0` a uniform seeded subsample is
/// kept, in enumeration order.
pub fn make_pairs(votes: &[u64], max_pairs: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..votes.len() {
        for j in 0..votes.len() {
            if votes[i] > votes[j] {
                pairs.push((i, j));
            }
        }
    }
    if max_pairs > 0 && pairs.len() > max_pairs {
        let chosen = rand::seq::index::sample(rng, pairs.len(), max_pairs);
        let mut keep: Vec<usize> = chosen.into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|k| pairs[k]).collect();
    }
    pairs
}

/// Hinge ranking loss `sum over pairs of max(0, margin + s_j - s_i)`,
/// recorded on the tape.
pub fn question_loss(
    tape: &mut Tape,
    scores: &[Var],
    pairs: &[(usize, usize)],
    margin: f64,
) -> Result<Var, TensorError> {
    if pairs.is_empty() {
        return Ok(tape.constant(crate::tensor::Tensor::scalar(0.0)));
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let diff = tape.sub(scores[j], scores[i])?;
        let shifted = tape.add_scalar(diff, margin);
        terms.push(tape.relu(shifted)?);
    }
    let stacked = tape.concat_cols(&terms)?;
    tape.sum(stacked)
}

/// Scores one prepared question with the current parameters.
pub fn score_question(model: &Model, inst: &QuestionInstance) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let pass = forward(&mut tape, &bound, model, inst)?;
    Ok(pass.extract(&tape).scores)
}

/// Prepares instances for the selected questions and evaluates the model.
pub fn evaluate_model(
    corpus: &Corpus,
    indices: &[usize],
    tfidf: &TfidfIndex,
    model: &Model,
    ndcg_k: usize,
    parallelism: usize,
) -> Result<MetricReport, TrainError> {
    let mut instances = HashMap::new();
    for &qi in indices {
        let q = &corpus.questions[qi];
        instances.insert(
            q.question_id.clone(),
            QuestionInstance::prepare(q, tfidf, &corpus.respondents, model)?,
        );
    }
    let report = eval::evaluate(corpus, indices, ndcg_k, parallelism, |q: &Question| {
        score_question(model, &instances[&q.question_id])
    })?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_p_at_1: f64,
    pub val_mrr: f64,
    pub val_ndcg: f64,
    /// Wall-clock training cost; excluded from the deterministic view.
    pub ms_per_question: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept (highest validation MRR).
    pub selected_epoch: usize,
}

impl TrainReport {
    /// Everything reproducible under a fixed seed: all fields except
    /// wall-clock timings, serialized as JSON lines.
    pub fn deterministic_view(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "{{\"epoch\":{},\"train_loss\":{:?},\"val_p_at_1\":{:?},\"val_mrr\":{:?},\"val_ndcg\":{:?}}}\n",
                e.epoch, e.train_loss, e.val_p_at_1, e.val_mrr, e.val_ndcg
            ));
        }
        out.push_str(&format!("{{\"selected_epoch\":{}}}\n", self.selected_epoch));
        out
    }

    pub fn render_summary(&self) -> String {
        let best = &self.epochs[self.selected_epoch - 1];
        format!(
            "epochs run {}\nselected epoch {} (val MRR {:.4}, P@1 {:.4}, NDCG {:.4})\nmean train time per question {:.2} ms\n",
            self.epochs.len(),
            self.selected_epoch,
            best.val_mrr,
            best.val_p_at_1,
            best.val_ndcg,
            self.epochs.iter().map(|e| e.ms_per_question).sum::<f64>() / self.epochs.len() as f64,
        )
    }
}

pub struct Trainer<'a> {
    corpus: &'a Corpus,
    split: &'a DatasetSplit,
    config: TrainConfig,
    instances: HashMap<String, QuestionInstance>,
    pairs: HashMap<String, Vec<(usize, usize)>>,
}

impl<'a> Trainer<'a> {
    /// Prepares per-question artifacts for the train and validation splits.
    pub fn new(
        corpus: &'a Corpus,
        split: &'a DatasetSplit,
        tfidf: &TfidfIndex,
        model: &Model,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        if split.train.is_empty() {
            return Err(TrainError::EmptyTrainSplit);
        }
        let mut instances = HashMap::new();
        let mut pairs = HashMap::new();
        let mut pair_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7061_7273);
        for &qi in split.train.iter().chain(&split.val) {
            let q = &corpus.questions[qi];
            let inst = QuestionInstance::prepare(q, tfidf, &corpus.respondents, model)?;
            pairs.insert(
                q.question_id.clone(),
                make_pairs(&inst.votes, config.max_pairs, &mut pair_rng),
            );
            instances.insert(q.question_id.clone(), inst);
        }
        Ok(Self {
            corpus,
            split,
            config,
            instances,
            pairs,
        })
    }

    pub fn instance(&self, question_id: &str) -> Option<&QuestionInstance> {
        self.instances.get(question_id)
    }

    fn validate(&self, model: &Model) -> Result<MetricReport, TrainError> {
        let report = eval::evaluate(
            self.corpus,
            &self.split.val,
            self.config.ndcg_k,
            self.config.eval_parallelism,
            |q: &Question| {
                let inst = self
                    .instances
                    .get(&q.question_id)
                    .expect("validation instances prepared");
                score_question(model, inst)
            },
        )?;
        Ok(report)
    }

    /// Runs the loop and returns the parameters of the best-MRR epoch.
    pub fn train(&self, model: Model) -> Result<(Model, TrainReport), TrainError> {
        self.train_with(model, |_, _| true)
    }

    /// Like [`Trainer::train`], invoking `keep_going` with the current
    /// parameters after each epoch; returning `false` ends the loop early.
    pub fn train_with(
        &self,
        mut model: Model,
        mut keep_going: impl FnMut(&Model, &EpochRecord) -> bool,
    ) -> Result<(Model, TrainReport), TrainError> {
        let shapes: Vec<(usize, usize)> = model
            .entry_shapes()
            .into_iter()
            .map(|(_, shape)| shape)
            .collect();
        let mut adam = Adam::new(self.config.learning_rate, &shapes);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x7368_7566);

        let mut report = TrainReport {
            epochs: Vec::new(),
            selected_epoch: 0,
        };
        let mut best: Option<(f64, usize, Model)> = None;
        let batch_size = self.config.batch_size.max(1);

        for epoch in 1..=self.config.epochs {
            let mut order: Vec<usize> = self.split.train.to_vec();
            order.shuffle(&mut shuffle_rng);

            let start = Instant::now();
            let mut loss_sum = 0.0;
            let mut trained = 0usize;

            for batch in order.chunks(batch_size) {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape);
                let mut batch_terms: Vec<Var> = Vec::new();

                for &qi in batch {
                    let q = &self.corpus.questions[qi];
                    let pairs = &self.pairs[&q.question_id];
                    if pairs.is_empty() {
                        continue;
                    }
                    let inst = &self.instances[&q.question_id];
                    // Non-finite values mid-forward are divergence, not a
                    // contract bug; report them with the question context.
                    let pass = match forward(&mut tape, &bound, &model, inst) {
                        Ok(pass) => pass,
                        Err(ModelError::Tensor(TensorError::NonFinite { .. })) => {
                            return Err(TrainError::Diverged {
                                question_id: q.question_id.clone(),
                                epoch,
                            });
                        }
                        Err(e) => return Err(e.into()),
                    };
                    let loss = question_loss(&mut tape, &pass.scores, pairs, self.config.margin)?;
                    let value = tape.value(loss).value()?;
                    if !value.is_finite() {
                        return Err(TrainError::Diverged {
                            question_id: q.question_id.clone(),
                            epoch,
                        });
                    }
                    loss_sum += value;
                    trained += 1;
                    batch_terms.push(loss);
                }
                if batch_terms.is_empty() {
                    continue;
                }

                let total = if batch_terms.len() == 1 {
                    batch_terms[0]
                } else {
                    let stacked = tape.concat_cols(&batch_terms)?;
                    tape.sum(stacked)?
                };
                let mut grads = tape.backward(total)?;
                let mut grad_tensors: Vec<crate::tensor::Tensor> = bound
                    .entry_vars
                    .iter()
                    .zip(&shapes)
                    .map(|(&v, &shape)| grads.take(v, shape))
                    .collect();

                if self.config.grad_clip > 0.0 {
                    let norm: f64 = grad_tensors
                        .iter()
                        .map(|g| g.frobenius_sq())
                        .sum::<f64>()
                        .sqrt();
                    if norm > self.config.grad_clip {
                        let scale = self.config.grad_clip / norm;
                        for g in &mut grad_tensors {
                            *g = g.scale(scale);
                        }
                    }
                }

                let mut trainable = model.trainable_mut();
                adam.step(&mut trainable, &grad_tensors)?;
            }

            let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
            let val = self.validate(&model)?;
            let record = EpochRecord {
                epoch,
                train_loss: if trained == 0 {
                    0.0
                } else {
                    loss_sum / trained as f64
                },
                val_p_at_1: val.p_at_1,
                val_mrr: val.mrr,
                val_ndcg: val.ndcg,
                ms_per_question: if trained == 0 {
                    0.0
                } else {
                    elapsed_ms / trained as f64
                },
            };
            report.epochs.push(record);

            let improved = best.as_ref().is_none_or(|b| val.mrr > b.0);
            if improved {
                best = Some((val.mrr, epoch, model.clone()));
            } else if let Some(b) = best.as_ref() {
                if self.config.patience > 0 && epoch - b.1 >= self.config.patience {
                    break;
                }
            }
            if !keep_going(&model, report.epochs.last().expect("just pushed")) {
                break;
            }
        }

        let (_, selected_epoch, best_model) = best.expect("at least one epoch ran");
        report.selected_epoch = selected_epoch;
        Ok((best_model, report))
    }
}

#[cfg(test)]
mod tests;
