//! Per-question forward-pass artifacts, prepared once and reused across
//! epochs.
//!
//! Answers are processed in a canonical order (sorted by answer id) and
//! outputs are mapped back to input positions at the end. Every float
//! reduction therefore runs in an order independent of how the caller
//! happened to arrange the answers, which makes answer-permutation
//! equivariance of scores exact rather than approximate.

use super::{Model, ModelError};
use crate::corpus::{Question, RespondentIndex, TfidfIndex, TokenId};
use crate::graph::{build_graph, normalize_adjacency, QuestionGraph};
use crate::tensor::Tensor;

pub(super) enum WordRows {
    /// Gathered once from the frozen word table.
    Frozen(Tensor),
    /// Looked up on the tape each pass so gradients reach the table.
    Dynamic(Vec<TokenId>),
}

pub struct QuestionInstance {
    pub question_id: String,
    /// Answer ids and votes in the caller's input order.
    pub answer_ids: Vec<String>,
    pub votes: Vec<u64>,
    /// `canonical_to_input[k]` is the input position of canonical answer `k`.
    pub canonical_to_input: Vec<usize>,
    pub graph: QuestionGraph,
    /// Question tokens and per-answer tokens (canonical order), kept for
    /// attention dumps.
    pub question_tokens: Vec<TokenId>,
    pub answer_tokens: Vec<Vec<TokenId>>,
    pub(super) adjacency: Option<Tensor>,
    /// 0/1 node-type masks (question/answer/word), `n x d` each.
    pub(super) type_masks: Option<[Tensor; 3]>,
    /// Mean-pooling assembly: `n x n_words`, rows are text-node token
    /// distributions, word rows the identity.
    pub(super) assembly: Tensor,
    pub(super) word_rows: WordRows,
    /// Respondent table rows per canonical answer.
    pub(super) respondent_rows: Vec<usize>,
    /// Whether each canonical answer's respondent was known at ingest time.
    pub respondent_known: Vec<bool>,
}

impl QuestionInstance {
    pub fn prepare(
        question: &Question,
        tfidf: &TfidfIndex,
        respondents: &RespondentIndex,
        model: &Model,
    ) -> Result<Self, ModelError> {
        if question.tokens.is_empty() {
            return Err(ModelError::EmptyText {
                question_id: question.question_id.clone(),
                what: "question tokens",
            });
        }
        for a in &question.answers {
            if a.tokens.is_empty() {
                return Err(ModelError::EmptyText {
                    question_id: question.question_id.clone(),
                    what: "answer tokens",
                });
            }
        }

        let n_answers = question.answers.len();
        let mut canonical_to_input: Vec<usize> = (0..n_answers).collect();
        canonical_to_input.sort_by(|&a, &b| {
            question.answers[a]
                .answer_id
                .cmp(&question.answers[b].answer_id)
        });

        let canonical = Question {
            question_id: question.question_id.clone(),
            tokens: question.tokens.clone(),
            timestamp: question.timestamp,
            answers: canonical_to_input
                .iter()
                .map(|&i| question.answers[i].clone())
                .collect(),
        };

        let config = &model.config;
        let mut graph = build_graph(&canonical, tfidf);
        if config.ablation.no_question {
            graph.strip_question_edges();
        }
        let graph = normalize_adjacency(graph, config.normalization);

        let use_graph = !config.ablation.no_graph && config.layers > 0;
        let adjacency = use_graph.then(|| graph.dense_adjacency());

        let n = graph.node_count();
        let d = config.dim;
        let type_masks = (use_graph && !config.ablation.no_type_matrices).then(|| {
            let mut masks = [
                Tensor::zeros(n, d),
                Tensor::zeros(n, d),
                Tensor::zeros(n, d),
            ];
            for node in 0..n {
                let which = match graph.node_type(node) {
                    crate::graph::NodeType::Question => 0,
                    crate::graph::NodeType::Answer => 1,
                    crate::graph::NodeType::Word => 2,
                };
                for c in 0..d {
                    masks[which].set(node, c, 1.0);
                }
            }
            masks
        });

        // Text rows average their word-node embeddings (token multiplicity
        // counts); word rows select themselves.
        let n_words = graph.word_tokens.len();
        let word_block = 1 + n_answers;
        let mut assembly = Tensor::zeros(n, n_words);
        let spread = |row: usize, positions: &[usize], assembly: &mut Tensor| {
            let share = 1.0 / positions.len() as f64;
            for &node in positions {
                let col = node - word_block;
                let cur = assembly.get(row, col);
                assembly.set(row, col, cur + share);
            }
        };
        spread(0, &graph.question_positions, &mut assembly);
        for (i, positions) in graph.answer_positions.iter().enumerate() {
            spread(1 + i, positions, &mut assembly);
        }
        for k in 0..n_words {
            assembly.set(word_block + k, k, 1.0);
        }

        let word_rows = if config.trainable_word_embeddings {
            WordRows::Dynamic(graph.word_tokens.clone())
        } else {
            WordRows::Frozen(crate::tensor::lookup(
                &model.word_table,
                &graph.word_tokens,
            )?)
        };

        let respondent_rows: Vec<usize> = canonical
            .answers
            .iter()
            .map(|a| respondents.row_of(&a.respondent_id))
            .collect();
        let respondent_known: Vec<bool> = canonical
            .answers
            .iter()
            .map(|a| respondents.is_known(&a.respondent_id))
            .collect();

        Ok(Self {
            question_id: question.question_id.clone(),
            answer_ids: question
                .answers
                .iter()
                .map(|a| a.answer_id.clone())
                .collect(),
            votes: question.answers.iter().map(|a| a.votes).collect(),
            canonical_to_input,
            question_tokens: canonical.tokens.clone(),
            answer_tokens: canonical.answers.iter().map(|a| a.tokens.clone()).collect(),
            graph,
            adjacency,
            type_masks,
            assembly,
            word_rows,
            respondent_rows,
            respondent_known,
        })
    }

    pub fn answer_count(&self) -> usize {
        self.answer_ids.len()
    }
}
