//! Synthetic corpus generator with planted, tunable ranking signals.
//!
//! Three ingredients are planted per question:
//! - a content signal: each question gets its own small topic word set, and
//!   an answer's latent quality determines how much of its text is drawn
//!   from that set (high-quality answers therefore share words with the
//!   question and with each other);
//! - a respondent signal: every respondent carries a fixed skill scalar;
//! - noise words drawn from the shared pool.
//!
//! Votes rank answers by `strength * (content_weight * quality +
//! respondent_weight * skill) + (1 - strength) * noise`, normalized, so at
//! `signal_strength = 0` votes are independent of everything observable and
//! at 1 they are a deterministic function of the planted signals. Ranks map
//! to distinct vote counts, so every question has a strict ordering.

use super::{RawAnswer, RawCorpus, RawQuestion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_questions: usize,
    pub answers_per_question: usize,
    /// Size of the shared word pool (topic sets are sampled from it too).
    pub vocab_size: usize,
    pub respondent_pool: usize,
    /// How strongly votes follow the planted signals, in `[0, 1]`.
    pub signal_strength: f64,
    /// Relative weight of answer quality in the vote score.
    pub content_weight: f64,
    /// Relative weight of respondent skill in the vote score.
    pub respondent_weight: f64,
    pub question_len: usize,
    pub answer_len: usize,
    /// Topic words drawn per question.
    pub topic_words: usize,
    pub with_timestamps: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_questions: 100,
            answers_per_question: 5,
            vocab_size: 150,
            respondent_pool: 20,
            signal_strength: 1.0,
            content_weight: 1.0,
            respondent_weight: 1.0,
            question_len: 8,
            answer_len: 12,
            topic_words: 6,
            with_timestamps: true,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    /// Votes follow respondent skill only; answer text is uninformative.
    pub fn respondent_dominant(mut self) -> Self {
        self.content_weight = 0.0;
        self.respondent_weight = 1.0;
        self
    }

    /// Votes follow answer quality only; respondent ids are uninformative.
    pub fn content_only(mut self) -> Self {
        self.content_weight = 1.0;
        self.respondent_weight = 0.0;
        self
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> RawCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words: Vec<String> = (0..config.vocab_size).map(|i| format!("w{i:03}")).collect();
    let skills: Vec<f64> = (0..config.respondent_pool)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();

    // Balanced respondent assignment: counts differ by at most one, so
    // sensible pool sizes survive the min-answers-per-respondent filter.
    let total_answers = config.num_questions * config.answers_per_question;
    let mut assignment: Vec<usize> = (0..total_answers)
        .map(|i| i % config.respondent_pool.max(1))
        .collect();
    assignment.shuffle(&mut rng);

    let mut questions = Vec::with_capacity(config.num_questions);
    for qi in 0..config.num_questions {
        let topic: Vec<usize> = rand::seq::index::sample(
            &mut rng,
            config.vocab_size,
            config.topic_words.min(config.vocab_size),
        )
        .into_vec();

        let q_topic_count = config.topic_words.min(config.question_len);
        let mut q_tokens: Vec<String> = topic[..q_topic_count]
            .iter()
            .map(|&w| words[w].clone())
            .collect();
        while q_tokens.len() < config.question_len {
            q_tokens.push(words[rng.gen_range(0..config.vocab_size)].clone());
        }
        q_tokens.shuffle(&mut rng);

        let q_timestamp = config.with_timestamps.then_some(qi as i64 * 10_000);

        let mut answers = Vec::with_capacity(config.answers_per_question);
        let mut scores = Vec::with_capacity(config.answers_per_question);
        for ai in 0..config.answers_per_question {
            let quality: f64 = rng.gen_range(0.0..1.0);
            let topic_count = ((config.answer_len as f64) * (0.15 + 0.7 * quality))
                .round()
                .clamp(0.0, config.answer_len as f64) as usize;
            let mut tokens: Vec<String> = (0..topic_count)
                .map(|_| words[topic[rng.gen_range(0..topic.len())]].clone())
                .collect();
            while tokens.len() < config.answer_len {
                tokens.push(words[rng.gen_range(0..config.vocab_size)].clone());
            }
            tokens.shuffle(&mut rng);

            let respondent = assignment[qi * config.answers_per_question + ai];
            let noise: f64 = rng.gen_range(0.0..1.0);
            let weight_sum = config.content_weight + config.respondent_weight;
            let planted = if weight_sum > 0.0 {
                (config.content_weight * quality + config.respondent_weight * skills[respondent])
                    / weight_sum
            } else {
                0.0
            };
            scores.push(config.signal_strength * planted + (1.0 - config.signal_strength) * noise);

            // Log-uniform answer delay in [1, 10^4] minutes. Drawn even when
            // timestamps are disabled so the toggle changes nothing else.
            let delay = 10f64.powf(rng.gen_range(0.0..4.0)) as i64;
            let timestamp = config.with_timestamps.then_some(qi as i64 * 10_000 + delay);

            answers.push(RawAnswer {
                answer_id: format!("q{qi:04}a{ai}"),
                tokens,
                respondent_id: format!("u{respondent:03}"),
                votes: 0,
                timestamp,
            });
        }

        // Rank answers by score descending; votes are distinct by rank.
        let n = answers.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        for (rank, &ai) in order.iter().enumerate() {
            answers[ai].votes = (n - rank) as u64;
        }

        questions.push(RawQuestion {
            question_id: format!("q{qi:04}"),
            tokens: q_tokens,
            answers,
            timestamp: q_timestamp,
        });
    }

    RawCorpus { questions }
}
