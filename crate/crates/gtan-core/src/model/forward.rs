//! Tape-recorded forward pass: input assembly, gated typed propagation,
//! alternating tri-attention, and the FC scoring head.

use super::instance::WordRows;
use super::{BoundModel, Model, ModelError, QuestionInstance};
use crate::tensor::{Tape, Tensor, Var};

/// On-tape handles for one question, all in the caller's answer order.
pub struct ForwardPass {
    pub scores: Vec<Var>,
    /// Question-attention rows (`1 x l(q)`), absent when question attention
    /// never runs (no_question / no_tri_attention).
    pub alphas: Option<Vec<Var>>,
    /// Answer-attention rows (`1 x l(a_i)`), absent under no_tri_attention.
    pub betas: Option<Vec<Var>>,
    /// Respondent gate activations (`1 x d`), absent when the gate is
    /// disabled or respondents are discarded.
    pub gates: Option<Vec<Var>>,
}

/// Extracted values of a [`ForwardPass`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub scores: Vec<f64>,
    pub alphas: Option<Vec<Vec<f64>>>,
    pub betas: Option<Vec<Vec<f64>>>,
    pub gates: Option<Vec<Vec<f64>>>,
}

impl ForwardPass {
    pub fn extract(&self, tape: &Tape) -> ForwardOutput {
        let values = |vars: &Option<Vec<Var>>| {
            vars.as_ref().map(|vs| {
                vs.iter()
                    .map(|&v| tape.value(v).data().to_vec())
                    .collect::<Vec<_>>()
            })
        };
        ForwardOutput {
            scores: self
                .scores
                .iter()
                .map(|&s| tape.value(s).value().expect("scores are scalars"))
                .collect(),
            alphas: values(&self.alphas),
            betas: values(&self.betas),
            gates: values(&self.gates),
        }
    }
}

/// Broadcasts a `1 x c` row to `rows` copies via a ones-column product.
fn broadcast_rows(tape: &mut Tape, row: Var, rows: usize) -> Result<Var, ModelError> {
    let ones = tape.constant(Tensor::ones(rows, 1));
    Ok(tape.matmul(ones, row)?)
}

/// One propagation layer: aggregate neighbors, transform by node type,
/// then blend with the previous representation through a learned gate.
fn gnn_layer(
    tape: &mut Tape,
    e: Var,
    adjacency: Var,
    layer_weights: &[Var],
    masks: &Option<[Var; 3]>,
    bound: &BoundModel,
    n: usize,
) -> Result<Var, ModelError> {
    let h = tape.matmul(adjacency, e)?;
    let eh = tape.mul(e, h)?;
    let x = tape.concat_cols(&[e, h, eh])?;

    let e_bar = match masks {
        None => {
            let y = tape.matmul(x, layer_weights[0])?;
            tape.relu(y)?
        }
        Some(masks) => {
            let mut acc: Option<Var> = None;
            for (tau, &w) in layer_weights.iter().enumerate() {
                let y = tape.matmul(x, w)?;
                let y = tape.relu(y)?;
                let masked = tape.mul(y, masks[tau])?;
                acc = Some(match acc {
                    None => masked,
                    Some(prev) => tape.add(prev, masked)?,
                });
            }
            acc.expect("at least one type matrix")
        }
    };

    let gate_in = tape.concat_cols(&[e_bar, e])?;
    let pre = tape.matmul(gate_in, bound.gate_weight)?;
    let bias = broadcast_rows(tape, bound.gate_bias, n)?;
    let pre = tape.add(pre, bias)?;
    let gate = tape.sigmoid(pre)?;

    let ones = tape.constant(Tensor::ones(n, tape.value(gate).cols()));
    let inverse = tape.sub(ones, gate)?;
    let new_part = tape.mul(gate, e_bar)?;
    let old_part = tape.mul(inverse, e)?;
    Ok(tape.add(new_part, old_part)?)
}

/// Input assembly plus the configured propagation layers; returns the
/// final node representation matrix.
pub(crate) fn embed_and_propagate(
    tape: &mut Tape,
    bound: &BoundModel,
    model: &Model,
    inst: &QuestionInstance,
) -> Result<Var, ModelError> {
    let config = &model.config;
    let n = inst.graph.node_count();

    // Word rows gathered from the table, text rows mean-pooled through the
    // assembly matrix.
    let word_rows = match &inst.word_rows {
        WordRows::Frozen(rows) => tape.constant(rows.clone()),
        WordRows::Dynamic(tokens) => {
            let table = bound
                .word_table
                .expect("dynamic word rows imply a bound word table");
            tape.lookup(table, tokens)?
        }
    };
    let assembly = tape.constant(inst.assembly.clone());
    let mut e = tape.matmul(assembly, word_rows)?;

    if let Some(adjacency) = &inst.adjacency {
        let a = tape.constant(adjacency.clone());
        let masks = inst.type_masks.as_ref().map(|ms| {
            [
                tape.constant(ms[0].clone()),
                tape.constant(ms[1].clone()),
                tape.constant(ms[2].clone()),
            ]
        });
        for layer in 0..config.layers {
            e = gnn_layer(tape, e, a, &bound.layer_weights[layer], &masks, bound, n)?;
        }
    }
    Ok(e)
}

/// Runs the full model for one prepared question on the given tape.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundModel,
    model: &Model,
    inst: &QuestionInstance,
) -> Result<ForwardPass, ModelError> {
    let config = &model.config;
    let ab = &config.ablation;
    let d = config.dim;
    let n_answers = inst.answer_count();

    let e = embed_and_propagate(tape, bound, model, inst)?;
    let q_hat = tape.lookup(e, &[0])?;
    let zero_row_d = tape.constant(Tensor::zeros(1, d));

    // Question word representations, shared across answers.
    let q_len = inst.graph.question_positions.len();
    let question_words = tape.lookup(e, &inst.graph.question_positions)?;

    let mut scores_canonical = Vec::with_capacity(n_answers);
    let mut alphas = Vec::with_capacity(n_answers);
    let mut betas = Vec::with_capacity(n_answers);
    let mut gates = Vec::with_capacity(n_answers);

    for i in 0..n_answers {
        let a_hat = tape.lookup(e, &[inst.graph.answer_node(i)])?;
        let e_u = if ab.no_respondent {
            zero_row_d
        } else {
            tape.lookup(bound.respondent_table, &[inst.respondent_rows[i]])?
        };

        let z = if ab.no_tri_attention {
            // Graph representations and the raw respondent embedding.
            let q_part = if ab.no_question { zero_row_d } else { q_hat };
            tape.concat_cols(&[q_part, a_hat, e_u])?
        } else {
            // Target-aware respondent representation.
            let u_bar = if ab.no_respondent || ab.no_respondent_gate {
                e_u
            } else {
                let gate_in = tape.concat_cols(&[q_hat, a_hat])?;
                let pre = tape.matmul(gate_in, bound.resp_gate_weight)?;
                let pre = tape.add(pre, bound.resp_gate_bias)?;
                let gate = tape.sigmoid(pre)?;
                gates.push(gate);
                tape.mul(gate, e_u)?
            };

            // Answer-specific question representation.
            let e_bar_i = if ab.no_question {
                tape.constant(Tensor::zeros(1, 2 * d))
            } else {
                let (q_tilde, alpha) = if ab.no_question_attention {
                    let uniform = tape.constant(Tensor::filled(1, q_len, 1.0 / q_len as f64));
                    (tape.matmul(uniform, question_words)?, uniform)
                } else {
                    let query = broadcast_rows(tape, a_hat, q_len)?;
                    let x = tape.concat_cols(&[query, question_words])?;
                    let pre = tape.matmul(x, bound.q_att_weight)?;
                    let bias = broadcast_rows(tape, bound.q_att_bias, q_len)?;
                    let pre = tape.add(pre, bias)?;
                    let act = tape.tanh(pre)?;
                    let logits_col = tape.matmul(act, bound.q_att_vector)?;
                    let logits = tape.transpose(logits_col);
                    let alpha = tape.softmax_vec(logits)?;
                    (tape.matmul(alpha, question_words)?, alpha)
                };
                alphas.push(alpha);
                tape.concat_cols(&[q_tilde, q_hat])?
            };

            // Context-aware answer representation.
            let positions = &inst.graph.answer_positions[i];
            let a_len = positions.len();
            let answer_words = tape.lookup(e, positions)?;
            let att_resp = if ab.no_respondent_in_answer_attention {
                zero_row_d
            } else {
                u_bar
            };
            let query_row = tape.concat_cols(&[e_bar_i, att_resp])?;
            let query = broadcast_rows(tape, query_row, a_len)?;
            let x = tape.concat_cols(&[query, answer_words])?;
            let pre = tape.matmul(x, bound.a_att_weight)?;
            let bias = broadcast_rows(tape, bound.a_att_bias, a_len)?;
            let pre = tape.add(pre, bias)?;
            let act = tape.tanh(pre)?;
            let logits_col = tape.matmul(act, bound.a_att_vector)?;
            let logits = tape.transpose(logits_col);
            let beta = tape.softmax_vec(logits)?;
            betas.push(beta);
            let a_tilde = tape.matmul(beta, answer_words)?;
            let a_bar = tape.concat_cols(&[a_tilde, a_hat])?;

            tape.concat_cols(&[e_bar_i, a_bar, u_bar])?
        };

        // Scoring head: ReLU between layers, linear output.
        let mut h = z;
        for (k, &(w, b)) in bound.fc.iter().enumerate() {
            let prod = tape.matmul(h, w)?;
            h = tape.add(prod, b)?;
            if k + 1 < bound.fc.len() {
                h = tape.relu(h)?;
            }
        }
        scores_canonical.push(h);
    }

    // Map canonical outputs back to the caller's answer order.
    let reorder = |canonical: Vec<Var>| -> Vec<Var> {
        let mut out = canonical.clone();
        for (k, &input_pos) in inst.canonical_to_input.iter().enumerate() {
            out[input_pos] = canonical[k];
        }
        out
    };

    Ok(ForwardPass {
        scores: reorder(scores_canonical),
        alphas: (!ab.no_tri_attention && !ab.no_question).then(|| reorder(alphas)),
        betas: (!ab.no_tri_attention).then(|| reorder(betas)),
        gates: (!ab.no_tri_attention && !ab.no_respondent && !ab.no_respondent_gate)
            .then(|| reorder(gates)),
    })
}
