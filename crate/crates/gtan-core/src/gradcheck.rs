//! Full-model gradient verification against central finite differences.
//!
//! Builds a small random question, runs the forward pass plus the pairwise
//! hinge loss, and compares every parameter gradient from the tape with
//! `(f(x + h) - f(x - h)) / 2h`, reporting the worst relative error per
//! parameter group. Dimensions default small so checking every single
//! parameter stays fast.

use crate::corpus::{self, generate_synthetic, SyntheticConfig, TfidfIndex, Vocabulary};
use crate::graph::Normalization;
use crate::model::{forward, AblationConfig, Model, ModelConfig, QuestionInstance};
use crate::tensor::Tape;
use crate::train::{make_pairs, question_loss, TrainError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub dim: usize,
    pub att_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub fc_layers: usize,
    pub normalization: Normalization,
    pub trainable_word_embeddings: bool,
    pub ablation: AblationConfig,
    pub answers: usize,
    pub seed: u64,
    /// Central-difference step.
    pub epsilon: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            att_dim: 8,
            hidden_dim: 8,
            layers: 2,
            fc_layers: 2,
            normalization: Normalization::None,
            trainable_word_embeddings: false,
            ablation: AblationConfig::default(),
            answers: 3,
            seed: 42,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
    pub parameters: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub worst_group: String,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("group                   params   max rel err\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{:<22} {:>8}   {:.3e}\n",
                g.name, g.parameters, g.max_rel_err
            ));
        }
        out.push_str(&format!(
            "{}: max relative error {:.3e} (tolerance {:.1e}), worst group {}\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.tolerance,
            self.worst_group
        ));
        out
    }
}

/// Compares analytic and numeric gradients for every trainable parameter.
pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckReport, TrainError> {
    // A small random question with distinct votes.
    let raw = generate_synthetic(&SyntheticConfig {
        num_questions: 1,
        answers_per_question: config.answers,
        vocab_size: 30,
        respondent_pool: config.answers.max(2),
        question_len: 5,
        answer_len: 6,
        topic_words: 3,
        seed: config.seed,
        ..Default::default()
    });
    let vocab = Vocabulary::build(&raw, 1);
    let corpus = corpus::index(&raw, vocab);
    let tfidf = TfidfIndex::from_all(&corpus);

    let model_config = ModelConfig {
        dim: config.dim,
        att_dim: config.att_dim,
        hidden_dim: config.hidden_dim,
        layers: config.layers,
        fc_layers: config.fc_layers,
        normalization: config.normalization,
        trainable_word_embeddings: config.trainable_word_embeddings,
        ablation: config.ablation,
    };
    let model = Model::init(
        model_config,
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        config.seed ^ 0x6d6f_64656c,
    );

    let question = &corpus.questions[0];
    let mut pair_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let votes: Vec<u64> = question.answers.iter().map(|a| a.votes).collect();
    let pairs = make_pairs(&votes, 0, &mut pair_rng);

    let loss_of = |m: &Model| -> Result<f64, TrainError> {
        let inst = QuestionInstance::prepare(question, &tfidf, &corpus.respondents, m)?;
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let pass = forward(&mut tape, &bound, m, &inst)?;
        let loss = question_loss(&mut tape, &pass.scores, &pairs, 1.0)?;
        Ok(tape.value(loss).value()?)
    };

    // Analytic gradients from one backward pass.
    let inst = QuestionInstance::prepare(question, &tfidf, &corpus.respondents, &model)?;
    let entry_shapes = model.entry_shapes();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let pass = forward(&mut tape, &bound, &model, &inst)?;
    let loss = question_loss(&mut tape, &pass.scores, &pairs, 1.0)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<crate::tensor::Tensor> = bound
        .entry_vars
        .iter()
        .zip(&entry_shapes)
        .map(|(&v, (_, shape))| grads.get(v, *shape))
        .collect();

    // Numeric gradients, one perturbed forward pair per parameter.
    let h = config.epsilon;
    let mut groups = Vec::with_capacity(entry_shapes.len());
    let mut worst = (String::new(), 0.0f64);
    for (entry_idx, (name, shape)) in entry_shapes.iter().enumerate() {
        let count = shape.0 * shape.1;
        let mut group_max = 0.0f64;
        for k in 0..count {
            let mut plus = model.clone();
            plus.trainable_mut()[entry_idx].data_mut()[k] += h;
            let mut minus = model.clone();
            minus.trainable_mut()[entry_idx].data_mut()[k] -= h;
            let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
            let a = analytic[entry_idx].data()[k];
            // The denominator floor sits above the finite-difference noise
            // scale (machine epsilon times the loss over 2h, ~1e-11 here);
            // below it the comparison is absolute at floor * tolerance.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            group_max = group_max.max(rel);
        }
        if group_max > worst.1 {
            worst = (name.clone(), group_max);
        }
        groups.push(GroupReport {
            name: name.clone(),
            max_rel_err: group_max,
            parameters: count,
        });
    }

    let max_rel_err = worst.1;
    Ok(GradCheckReport {
        groups,
        max_rel_err,
        worst_group: if worst.0.is_empty() {
            "none".into()
        } else {
            worst.0
        },
        tolerance: config.tolerance,
        passed: max_rel_err < config.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let report = grad_check(&GradCheckConfig::default()).unwrap();
        assert!(
            report.passed,
            "max rel err {:.3e} in {}",
            report.max_rel_err, report.worst_group
        );
    }

    #[test]
    fn trainable_word_table_is_checked_too() {
        let config = GradCheckConfig {
            trainable_word_embeddings: true,
            dim: 4,
            att_dim: 4,
            hidden_dim: 4,
            layers: 1,
            seed: 1,
            ..Default::default()
        };
        let report = grad_check(&config).unwrap();
        assert!(report.groups.iter().any(|g| g.name == "word_table"));
        assert!(report.passed, "{}", report.render());
    }

    #[test]
    fn larger_epsilon_grows_but_bounds_error() {
        // A coarse step crosses relu/hinge kinks, so the reported error
        // rises well above the fine-step one yet stays bounded by the
        // local slope scale instead of blowing up.
        let fine = grad_check(&GradCheckConfig::default()).unwrap();
        let coarse = grad_check(&GradCheckConfig {
            epsilon: 1e-3,
            ..Default::default()
        })
        .unwrap();
        assert!(coarse.max_rel_err >= fine.max_rel_err);
        assert!(coarse.max_rel_err.is_finite());
        assert!(coarse.max_rel_err < 10.0);
    }
}
