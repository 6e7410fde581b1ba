//! The answer-scoring model: graph propagation plus alternating
//! tri-attention over question words, answer words, and respondents.
//!
//! A forward pass embeds the graph nodes (mean-pooled word vectors for text
//! nodes), runs `T` gated propagation layers with node-type-specific
//! transforms, then per answer: gates the respondent embedding on the
//! question-answer pair, attends over question words with the answer as
//! query, attends over answer words with question and respondent as query,
//! and scores the concatenated representations with a small FC stack.
//! Every architectural component can be switched off independently for
//! ablation runs.

mod forward;
mod instance;

pub use forward::{forward, ForwardOutput, ForwardPass};
pub use instance::QuestionInstance;

use crate::corpus::Vocabulary;
use crate::graph::Normalization;
use crate::tensor::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("question {question_id} has no {what}")]
    EmptyText {
        question_id: String,
        what: &'static str,
    },
    #[error("word vector file: {0}")]
    WordVectors(String),
}

/// Switches that disable one architectural component each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationConfig {
    /// Skip graph propagation; attention runs on the input embeddings.
    pub no_graph: bool,
    /// One shared transform per layer instead of per-node-type matrices.
    pub no_type_matrices: bool,
    /// Discard all question information (graph edges included).
    pub no_question: bool,
    /// Discard all respondent information.
    pub no_respondent: bool,
    /// Skip the whole tri-attention stage; score graph representations.
    pub no_tri_attention: bool,
    /// Replace question attention with uniform mean pooling.
    pub no_question_attention: bool,
    /// Drop the respondent from the answer-attention query.
    pub no_respondent_in_answer_attention: bool,
    /// Use the raw respondent embedding without the pair-conditioned gate.
    pub no_respondent_gate: bool,
}

/// Flag names accepted on the command line and in config files, with the
/// conventional report labels.
pub const ABLATION_FLAGS: &[(&str, &str)] = &[
    ("no_graph", "w/o Graph"),
    ("no_type_matrices", "w/o T-MAT"),
    ("no_question", "w/o Que"),
    ("no_respondent", "w/o Res"),
    ("no_tri_attention", "w/o Tri-Att"),
    ("no_question_attention", "w/o Que-Att"),
    ("no_respondent_in_answer_attention", "w/o Res-Att"),
    ("no_respondent_gate", "w/o Res-Gate"),
];

impl AblationConfig {
    pub fn with_flag(mut self, flag: &str) -> Option<Self> {
        match flag {
            "no_graph" => self.no_graph = true,
            "no_type_matrices" => self.no_type_matrices = true,
            "no_question" => self.no_question = true,
            "no_respondent" => self.no_respondent = true,
            "no_tri_attention" => self.no_tri_attention = true,
            "no_question_attention" => self.no_question_attention = true,
            "no_respondent_in_answer_attention" => self.no_respondent_in_answer_attention = true,
            "no_respondent_gate" => self.no_respondent_gate = true,
            _ => return None,
        }
        Some(self)
    }

    pub fn from_flags(flags: &str) -> Option<Self> {
        let mut ab = AblationConfig::default();
        for flag in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            ab = ab.with_flag(flag)?;
        }
        Some(ab)
    }

    pub fn active_flags(&self) -> Vec<&'static str> {
        let set = [
            self.no_graph,
            self.no_type_matrices,
            self.no_question,
            self.no_respondent,
            self.no_tri_attention,
            self.no_question_attention,
            self.no_respondent_in_answer_attention,
            self.no_respondent_gate,
        ];
        ABLATION_FLAGS
            .iter()
            .zip(set)
            .filter_map(|(&(name, _), on)| on.then_some(name))
            .collect()
    }

    pub fn to_flags_string(&self) -> String {
        self.active_flags().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Representation width for words, questions, answers, and respondents.
    pub dim: usize,
    /// Attention hidden width.
    pub att_dim: usize,
    /// FC hidden width.
    pub hidden_dim: usize,
    /// Number of propagation layers (`T`).
    pub layers: usize,
    /// Number of FC layers in the scoring head (`K`).
    pub fc_layers: usize,
    pub normalization: Normalization,
    /// Word embeddings stay fixed during training unless enabled.
    pub trainable_word_embeddings: bool,
    pub ablation: AblationConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            att_dim: 64,
            hidden_dim: 64,
            layers: 2,
            fc_layers: 2,
            normalization: Normalization::None,
            trainable_word_embeddings: false,
            ablation: AblationConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Width of the concatenated representation fed to the scoring head.
    pub fn score_input_width(&self) -> usize {
        if self.ablation.no_tri_attention {
            3 * self.dim
        } else {
            5 * self.dim
        }
    }

    /// Transform matrices per propagation layer: one when tied, otherwise
    /// question / answer / word.
    pub fn type_matrices(&self) -> usize {
        if self.ablation.no_type_matrices {
            1
        } else {
            3
        }
    }
}

/// All trainable parameter groups. Weight matrices are stored in
/// input-by-output layout so a row vector times the matrix applies the
/// transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Per layer, one `3d x d` transform per node type in the order
    /// question, answer, word (a single shared one when types are tied).
    pub layer_weights: Vec<Vec<Tensor>>,
    /// Propagation gate, shared across layers: `2d x d` and `1 x d`.
    pub gate_weight: Tensor,
    pub gate_bias: Tensor,
    /// Respondent gate: `2d x d` and `1 x d`.
    pub resp_gate_weight: Tensor,
    pub resp_gate_bias: Tensor,
    /// Respondent embeddings: `(|U| + 1) x d`; the last row serves unseen
    /// respondents.
    pub respondent_table: Tensor,
    /// Question attention: `2d x a`, `1 x a`, `a x 1`.
    pub q_att_weight: Tensor,
    pub q_att_bias: Tensor,
    pub q_att_vector: Tensor,
    /// Answer attention: `4d x a`, `1 x a`, `a x 1`.
    pub a_att_weight: Tensor,
    pub a_att_bias: Tensor,
    pub a_att_vector: Tensor,
    /// Scoring head: (weight, bias) per FC layer.
    pub fc: Vec<(Tensor, Tensor)>,
}

impl ModelParams {
    fn for_each<'a>(&'a self, mut f: impl FnMut(String, &'a Tensor)) {
        for (t, ws) in self.layer_weights.iter().enumerate() {
            for (tau, w) in ws.iter().enumerate() {
                f(format!("layer{t}.type{tau}"), w);
            }
        }
        f("gate.weight".into(), &self.gate_weight);
        f("gate.bias".into(), &self.gate_bias);
        f("resp_gate.weight".into(), &self.resp_gate_weight);
        f("resp_gate.bias".into(), &self.resp_gate_bias);
        f("respondent_table".into(), &self.respondent_table);
        f("q_att.weight".into(), &self.q_att_weight);
        f("q_att.bias".into(), &self.q_att_bias);
        f("q_att.vector".into(), &self.q_att_vector);
        f("a_att.weight".into(), &self.a_att_weight);
        f("a_att.bias".into(), &self.a_att_bias);
        f("a_att.vector".into(), &self.a_att_vector);
        for (k, (w, b)) in self.fc.iter().enumerate() {
            f(format!("fc{k}.weight"), w);
            f(format!("fc{k}.bias"), b);
        }
    }

    pub fn entries(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.for_each(|name, t| out.push((name, t)));
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (t, ws) in self.layer_weights.iter_mut().enumerate() {
            for (tau, w) in ws.iter_mut().enumerate() {
                out.push((format!("layer{t}.type{tau}"), w));
            }
        }
        out.push(("gate.weight".into(), &mut self.gate_weight));
        out.push(("gate.bias".into(), &mut self.gate_bias));
        out.push(("resp_gate.weight".into(), &mut self.resp_gate_weight));
        out.push(("resp_gate.bias".into(), &mut self.resp_gate_bias));
        out.push(("respondent_table".into(), &mut self.respondent_table));
        out.push(("q_att.weight".into(), &mut self.q_att_weight));
        out.push(("q_att.bias".into(), &mut self.q_att_bias));
        out.push(("q_att.vector".into(), &mut self.q_att_vector));
        out.push(("a_att.weight".into(), &mut self.a_att_weight));
        out.push(("a_att.bias".into(), &mut self.a_att_bias));
        out.push(("a_att.vector".into(), &mut self.a_att_vector));
        for (k, (w, b)) in self.fc.iter_mut().enumerate() {
            out.push((format!("fc{k}.weight"), w));
            out.push((format!("fc{k}.bias"), b));
        }
        out
    }
}

/// Word table plus trainable parameters under one config.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    /// `|V| x d`; frozen unless `trainable_word_embeddings`.
    pub word_table: Tensor,
    pub params: ModelParams,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::new(
        rows,
        cols,
        (0..rows * cols).map(|_| dist.sample(rng)).collect(),
    )
    .expect("sampled data matches shape")
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid normal");
    Tensor::new(
        rows,
        cols,
        (0..rows * cols).map(|_| dist.sample(rng)).collect(),
    )
    .expect("sampled data matches shape")
}

impl Model {
    /// Fresh model: Xavier-uniform weight matrices, zero biases, and
    /// N(0, 0.1) embedding tables, all drawn from one seeded stream.
    pub fn init(config: ModelConfig, vocab_rows: usize, respondent_rows: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let a = config.att_dim;

        let word_table = gaussian(&mut rng, vocab_rows, d, 0.1);

        let layer_weights = (0..config.layers)
            .map(|_| {
                (0..config.type_matrices())
                    .map(|_| xavier(&mut rng, 3 * d, d, 3 * d, d))
                    .collect()
            })
            .collect();

        let mut fc = Vec::with_capacity(config.fc_layers);
        let mut in_width = config.score_input_width();
        for k in 0..config.fc_layers {
            let out_width = if k + 1 == config.fc_layers {
                1
            } else {
                config.hidden_dim
            };
            fc.push((
                xavier(&mut rng, in_width, out_width, in_width, out_width),
                Tensor::zeros(1, out_width),
            ));
            in_width = out_width;
        }

        let params = ModelParams {
            layer_weights,
            gate_weight: xavier(&mut rng, 2 * d, d, 2 * d, d),
            gate_bias: Tensor::zeros(1, d),
            resp_gate_weight: xavier(&mut rng, 2 * d, d, 2 * d, d),
            resp_gate_bias: Tensor::zeros(1, d),
            respondent_table: gaussian(&mut rng, respondent_rows, d, 0.1),
            q_att_weight: xavier(&mut rng, 2 * d, a, 2 * d, a),
            q_att_bias: Tensor::zeros(1, a),
            q_att_vector: xavier(&mut rng, a, 1, a, 1),
            a_att_weight: xavier(&mut rng, 4 * d, a, 4 * d, a),
            a_att_bias: Tensor::zeros(1, a),
            a_att_vector: xavier(&mut rng, a, 1, a, 1),
            fc,
        };

        Self {
            config,
            word_table,
            params,
        }
    }

    /// Named shapes of every trainable tensor, in binding order. The word
    /// table appears first when it is trainable.
    pub fn entry_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        if self.config.trainable_word_embeddings {
            out.push(("word_table".to_string(), self.word_table.shape()));
        }
        self.params.for_each(|name, t| out.push((name, t.shape())));
        out
    }

    /// Mutable references to every trainable tensor, aligned with
    /// [`Model::entry_shapes`].
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        if self.config.trainable_word_embeddings {
            out.push(&mut self.word_table);
        }
        out.extend(self.params.entries_mut().into_iter().map(|(_, t)| t));
        out
    }

    /// Records every parameter on the tape. Tracked leaves for trainables;
    /// the frozen word table is handled per question instance instead.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut entry_vars = Vec::new();
        let word_table = if self.config.trainable_word_embeddings {
            let v = tape.leaf(self.word_table.clone());
            entry_vars.push(v);
            Some(v)
        } else {
            None
        };

        let leaf = |t: &Tensor, entry_vars: &mut Vec<Var>, tape: &mut Tape| {
            let v = tape.leaf(t.clone());
            entry_vars.push(v);
            v
        };

        let p = &self.params;
        let layer_weights = p
            .layer_weights
            .iter()
            .map(|ws| ws.iter().map(|w| leaf(w, &mut entry_vars, tape)).collect())
            .collect();
        let gate_weight = leaf(&p.gate_weight, &mut entry_vars, tape);
        let gate_bias = leaf(&p.gate_bias, &mut entry_vars, tape);
        let resp_gate_weight = leaf(&p.resp_gate_weight, &mut entry_vars, tape);
        let resp_gate_bias = leaf(&p.resp_gate_bias, &mut entry_vars, tape);
        let respondent_table = leaf(&p.respondent_table, &mut entry_vars, tape);
        let q_att_weight = leaf(&p.q_att_weight, &mut entry_vars, tape);
        let q_att_bias = leaf(&p.q_att_bias, &mut entry_vars, tape);
        let q_att_vector = leaf(&p.q_att_vector, &mut entry_vars, tape);
        let a_att_weight = leaf(&p.a_att_weight, &mut entry_vars, tape);
        let a_att_bias = leaf(&p.a_att_bias, &mut entry_vars, tape);
        let a_att_vector = leaf(&p.a_att_vector, &mut entry_vars, tape);
        let fc =
            p.fc.iter()
                .map(|(w, b)| {
                    (
                        leaf(w, &mut entry_vars, tape),
                        leaf(b, &mut entry_vars, tape),
                    )
                })
                .collect();

        BoundModel {
            word_table,
            layer_weights,
            gate_weight,
            gate_bias,
            resp_gate_weight,
            resp_gate_bias,
            respondent_table,
            q_att_weight,
            q_att_bias,
            q_att_vector,
            a_att_weight,
            a_att_bias,
            a_att_vector,
            fc,
            entry_vars,
        }
    }

    /// Overwrites word rows from a plain-text `word v1 .. vd` file.
    /// Unknown words are skipped; vocabulary words absent from the file
    /// keep their initialized rows.
    pub fn load_word_vectors(
        &mut self,
        text: &str,
        vocab: &Vocabulary,
    ) -> Result<usize, ModelError> {
        let d = self.config.dim;
        let mut loaded = 0;
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("nonempty line has a first field");
            let values: Vec<f64> = fields
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| ModelError::WordVectors(format!("line {}: {e}", ln + 1)))
                })
                .collect::<Result<_, _>>()?;
            if values.len() != d {
                return Err(ModelError::WordVectors(format!(
                    "line {}: expected {d} values, got {}",
                    ln + 1,
                    values.len()
                )));
            }
            let idx = vocab.index_of(word);
            if idx != crate::corpus::UNK {
                for (c, v) in values.into_iter().enumerate() {
                    self.word_table.set(idx, c, v);
                }
                loaded += 1;
            }
        }
        Ok(loaded)
    }
}

/// Tape handles for one bound parameter set.
pub struct BoundModel {
    pub word_table: Option<Var>,
    pub layer_weights: Vec<Vec<Var>>,
    pub gate_weight: Var,
    pub gate_bias: Var,
    pub resp_gate_weight: Var,
    pub resp_gate_bias: Var,
    pub respondent_table: Var,
    pub q_att_weight: Var,
    pub q_att_bias: Var,
    pub q_att_vector: Var,
    pub a_att_weight: Var,
    pub a_att_bias: Var,
    pub a_att_vector: Var,
    pub fc: Vec<(Var, Var)>,
    /// Vars aligned with [`Model::entry_shapes`].
    pub entry_vars: Vec<Var>,
}
