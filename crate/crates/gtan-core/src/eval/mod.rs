//! Ranking metrics (P@1, MRR, NDCG@K), split evaluation, answer-similarity
//! quartile analysis, and the answer-delay histogram.

use crate::corpus::{Corpus, Question};
use crate::model::ModelError;
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty question set")]
    EmptySplit,
    #[error("timestamps are missing; interval analysis unsupported on this corpus")]
    MissingTimestamps,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Indices sorted by score descending; ties keep input order.
pub fn rank_answers(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

fn max_votes(votes: &[u64]) -> u64 {
    votes.iter().copied().max().unwrap_or(0)
}

/// 1 when the top-ranked answer holds the maximum vote count (any
/// vote-tied best answer counts).
pub fn p_at_1(ranking: &[usize], votes: &[u64]) -> f64 {
    if ranking.is_empty() {
        return 0.0;
    }
    if votes[ranking[0]] == max_votes(votes) {
        1.0
    } else {
        0.0
    }
}

/// Reciprocal of the best answer's 1-based rank; with vote ties, the
/// highest-ranked answer holding the maximum counts.
pub fn reciprocal_rank(ranking: &[usize], votes: &[u64]) -> f64 {
    let best = max_votes(votes);
    for (pos, &i) in ranking.iter().enumerate() {
        if votes[i] == best {
            return 1.0 / (pos + 1) as f64;
        }
    }
    0.0
}

/// Binary-relevance NDCG: an answer is relevant when it belongs to the K
/// highest-voted answers (vote ties broken by input order).
pub fn ndcg_at_k(ranking: &[usize], votes: &[u64], k: usize) -> f64 {
    let n = ranking.len();
    if n == 0 || k == 0 {
        return 0.0;
    }
    let depth = k.min(n);
    let mut by_votes: Vec<usize> = (0..n).collect();
    by_votes.sort_by(|&a, &b| votes[b].cmp(&votes[a]));
    let mut relevant = vec![false; n];
    for &i in by_votes.iter().take(depth) {
        relevant[i] = true;
    }

    let mut dcg = 0.0;
    let mut idcg = 0.0;
    for pos in 0..depth {
        let discount = 1.0 / ((pos + 2) as f64).log2();
        if relevant[ranking[pos]] {
            dcg += discount;
        }
        idcg += discount;
    }
    dcg / idcg
}

#[derive(Debug, Clone, Serialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub p_at_1: f64,
    pub reciprocal_rank: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub p_at_1: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub ndcg_k: usize,
    pub questions: usize,
    pub per_question: Vec<QuestionMetrics>,
}

impl MetricReport {
    pub fn render(&self) -> String {
        format!(
            "questions {}\nP@1     {:.4}\nMRR     {:.4}\nNDCG@{} {:.4}\n",
            self.questions, self.p_at_1, self.mrr, self.ndcg_k, self.ndcg
        )
    }

    pub fn per_question_csv(&self) -> String {
        let mut out = String::from("question_id,p_at_1,reciprocal_rank,ndcg\n");
        for q in &self.per_question {
            out.push_str(&format!(
                "{},{},{},{}\n",
                q.question_id, q.p_at_1, q.reciprocal_rank, q.ndcg
            ));
        }
        out
    }
}

/// Scores each selected question and averages the three metrics
/// (unweighted over questions). Per-question work runs on up to
/// `parallelism` threads (0 = all cores); aggregation order is fixed, so
/// results do not depend on the thread count.
pub fn evaluate<F>(
    corpus: &Corpus,
    indices: &[usize],
    ndcg_k: usize,
    parallelism: usize,
    scorer: F,
) -> Result<MetricReport, EvalError>
where
    F: Fn(&Question) -> Result<Vec<f64>, ModelError> + Sync,
{
    if indices.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let per_question_of = |&qi: &usize| -> Result<QuestionMetrics, EvalError> {
        let q = &corpus.questions[qi];
        let scores = scorer(q)?;
        let votes: Vec<u64> = q.answers.iter().map(|a| a.votes).collect();
        let ranking = rank_answers(&scores);
        Ok(QuestionMetrics {
            question_id: q.question_id.clone(),
            p_at_1: p_at_1(&ranking, &votes),
            reciprocal_rank: reciprocal_rank(&ranking, &votes),
            ndcg: ndcg_at_k(&ranking, &votes, ndcg_k),
        })
    };

    let per_question: Vec<QuestionMetrics> = if parallelism == 1 {
        indices
            .iter()
            .map(per_question_of)
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| {
            indices
                .par_iter()
                .map(per_question_of)
                .collect::<Result<_, _>>()
        })?
    };

    let n = per_question.len() as f64;
    Ok(MetricReport {
        p_at_1: per_question.iter().map(|m| m.p_at_1).sum::<f64>() / n,
        mrr: per_question.iter().map(|m| m.reciprocal_rank).sum::<f64>() / n,
        ndcg: per_question.iter().map(|m| m.ndcg).sum::<f64>() / n,
        ndcg_k,
        questions: per_question.len(),
        per_question,
    })
}

/// Scores equal to vote counts: the metric upper bound.
pub fn oracle_scores(question: &Question) -> Vec<f64> {
    question.answers.iter().map(|a| a.votes as f64).collect()
}

// ---------------------------------------------------------------------------
// Answer-similarity quartile analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SimilarityReport {
    /// Mean cosine similarity between top-quartile answer pairs, then
    /// top-bottom pairs, then bottom-quartile pairs; per-question means
    /// averaged over the questions contributing pairs of that kind.
    pub top_top: f64,
    pub top_bottom: f64,
    pub bottom_bottom: f64,
    pub pair_counts: [usize; 3],
    pub questions_used: usize,
    pub questions_skipped: usize,
}

impl SimilarityReport {
    pub fn render(&self) -> String {
        format!(
            "questions used {} (skipped {})\nTop-Top       {:.4}  ({} pairs)\nTop-Bottom    {:.4}  ({} pairs)\nBottom-Bottom {:.4}  ({} pairs)\n",
            self.questions_used,
            self.questions_skipped,
            self.top_top,
            self.pair_counts[0],
            self.top_bottom,
            self.pair_counts[1],
            self.bottom_bottom,
            self.pair_counts[2],
        )
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean-pools each answer's word embeddings and compares answers from the
/// top vote quartile against the bottom one. Questions need at least four
/// answers so both quartiles are nonempty; for `n` answers the top covers
/// ranks `1..=ceil(n/4)` and the bottom `floor(3n/4)+1..=n` of the
/// vote-descending order.
pub fn analyze_similarity(corpus: &Corpus, embeddings: &Tensor) -> SimilarityReport {
    let mut sums = [0.0f64; 3];
    let mut question_counts = [0usize; 3];
    let mut pair_counts = [0usize; 3];
    let mut used = 0;
    let mut skipped = 0;

    for q in &corpus.questions {
        let n = q.answers.len();
        if n < 4 {
            skipped += 1;
            continue;
        }
        used += 1;

        let votes: Vec<u64> = q.answers.iter().map(|a| a.votes).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| votes[b].cmp(&votes[a]));

        let top_len = n.div_ceil(4);
        let bottom_start = 3 * n / 4;
        let top: Vec<usize> = order[..top_len].to_vec();
        let bottom: Vec<usize> = order[bottom_start..].to_vec();

        let pooled: Vec<Vec<f64>> = q
            .answers
            .iter()
            .map(|a| {
                let mut v = vec![0.0; embeddings.cols()];
                for &t in &a.tokens {
                    for (c, vv) in v.iter_mut().enumerate() {
                        *vv += embeddings.get(t, c);
                    }
                }
                let inv = 1.0 / a.tokens.len().max(1) as f64;
                v.iter_mut().for_each(|vv| *vv *= inv);
                v
            })
            .collect();

        let mut add_pairs = |xs: &[usize], ys: &[usize], which: usize, same: bool| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (i, &x) in xs.iter().enumerate() {
                let start = if same { i + 1 } else { 0 };
                for &y in &ys[start..] {
                    sum += cosine(&pooled[x], &pooled[y]);
                    count += 1;
                }
            }
            if count > 0 {
                sums[which] += sum / count as f64;
                question_counts[which] += 1;
                pair_counts[which] += count;
            }
        };
        add_pairs(&top, &top, 0, true);
        add_pairs(&top, &bottom, 1, false);
        add_pairs(&bottom, &bottom, 2, true);
    }

    let mean = |which: usize| {
        if question_counts[which] == 0 {
            0.0
        } else {
            sums[which] / question_counts[which] as f64
        }
    };
    SimilarityReport {
        top_top: mean(0),
        top_bottom: mean(1),
        bottom_bottom: mean(2),
        pair_counts,
        questions_used: used,
        questions_skipped: skipped,
    }
}

// ---------------------------------------------------------------------------
// Answer-delay histogram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IntervalHistogram {
    /// Bucket `k` counts delays in `[10^(k-1), 10^k)` minutes; bucket 0 is
    /// `[0, 1)`.
    pub counts: Vec<u64>,
}

impl IntervalHistogram {
    pub fn bucket_label(k: usize) -> String {
        format!("<{} min", 10u64.pow(k as u32))
    }

    pub fn render(&self) -> String {
        let total: u64 = self.counts.iter().sum();
        let mut out = String::new();
        for (k, &c) in self.counts.iter().enumerate() {
            let share = if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            };
            out.push_str(&format!(
                "{:<12} {:>8}  {:>5.1}%\n",
                Self::bucket_label(k),
                c,
                share * 100.0
            ));
        }
        out
    }
}

/// Log-bucketed histogram of answer-minus-question timestamps in minutes.
/// Every question and answer must carry a timestamp.
pub fn interval_histogram(corpus: &Corpus) -> Result<IntervalHistogram, EvalError> {
    let mut counts: Vec<u64> = Vec::new();
    for q in &corpus.questions {
        let q_ts = q.timestamp.ok_or(EvalError::MissingTimestamps)?;
        for a in &q.answers {
            let a_ts = a.timestamp.ok_or(EvalError::MissingTimestamps)?;
            let delta = (a_ts - q_ts).max(0) as f64;
            let bucket = if delta < 1.0 {
                0
            } else {
                delta.log10().floor() as usize + 1
            };
            if counts.len() <= bucket {
                counts.resize(bucket + 1, 0);
            }
            counts[bucket] += 1;
        }
    }
    Ok(IntervalHistogram { counts })
}

// ---------------------------------------------------------------------------
// Paired sign test
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SignTest {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// Two-sided exact binomial p-value over the non-tied pairs.
    pub p_value: f64,
}

/// Paired sign test between two per-question score sequences.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired test needs equal lengths");
    let mut wins_a = 0;
    let mut wins_b = 0;
    let mut ties = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            wins_a += 1;
        } else if y > x {
            wins_b += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins_a + wins_b;
    let k = wins_a.max(wins_b);
    let p_value = if n == 0 {
        1.0
    } else {
        // 2 * P[X >= k], X ~ Binomial(n, 1/2), capped at 1.
        let mut tail = 0.0;
        for i in k..=n {
            tail += ln_choose(n, i).exp();
        }
        (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0)
    };
    SignTest {
        wins_a,
        wins_b,
        ties,
        p_value,
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests;
