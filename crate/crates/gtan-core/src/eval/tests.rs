use super::*;
use crate::corpus::{generate_synthetic, index, RawCorpus, SyntheticConfig, Vocabulary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rank_answers_cases() {
    assert_eq!(rank_answers(&[0.1, 0.9]), vec![1, 0]);
    // Ties keep input order.
    assert_eq!(rank_answers(&[0.5, 0.5]), vec![0, 1]);
}

/// Brute-force stable comparison sort, written independently.
fn rank_oracle(scores: &[f64]) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for (k, &i) in remaining.iter().enumerate() {
            if scores[i] > scores[remaining[best]] {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

#[test]
fn rank_answers_matches_selection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let scores: Vec<f64> = (0..6)
            .map(|_| (rng.gen_range(-5..=5) as f64) / 2.0)
            .collect();
        assert_eq!(rank_answers(&scores), rank_oracle(&scores), "{scores:?}");
    }
}

#[test]
fn p_at_1_cases() {
    assert_eq!(p_at_1(&[1, 0], &[3, 5]), 1.0);
    assert_eq!(p_at_1(&[0, 1], &[3, 5]), 0.0);
    // Either vote-tied best answer on top counts.
    assert_eq!(p_at_1(&[0, 1, 2], &[5, 5, 1]), 1.0);
    assert_eq!(p_at_1(&[1, 0, 2], &[5, 5, 1]), 1.0);
    assert_eq!(p_at_1(&[2, 0, 1], &[5, 5, 1]), 0.0);
}

#[test]
fn reciprocal_rank_cases() {
    assert_eq!(reciprocal_rank(&[0, 1], &[9, 1]), 1.0);
    assert_eq!(reciprocal_rank(&[1, 0], &[9, 1]), 0.5);
    assert_eq!(reciprocal_rank(&[4, 2, 1, 0, 3], &[9, 0, 0, 0, 0]), 0.25);
}

#[test]
fn ndcg_hand_case() {
    // n answers 0..3 with votes making 0,1,2 the top-3 set; the ranking
    // places exactly two of them at positions 1 and 3.
    let votes = [10, 8, 6, 1];
    let ranking = [0, 3, 1, 2];
    let got = ndcg_at_k(&ranking, &votes, 3);
    let log2 = |x: f64| x.log2();
    let expect =
        (1.0 / log2(2.0) + 1.0 / log2(4.0)) / (1.0 / log2(2.0) + 1.0 / log2(3.0) + 1.0 / log2(4.0));
    assert!((got - expect).abs() < 1e-12);
    assert!((expect - 0.7039).abs() < 1e-4);
}

#[test]
fn ndcg_perfect_and_k1() {
    let votes = [5, 4, 3, 2];
    assert_eq!(ndcg_at_k(&[0, 1, 2, 3], &votes, 3), 1.0);
    // K=1 reduces to P@1 on untied votes.
    for ranking in [[0, 1, 2, 3], [1, 0, 2, 3], [3, 2, 1, 0]] {
        assert_eq!(ndcg_at_k(&ranking, &votes, 1), p_at_1(&ranking, &votes));
    }
}

#[test]
fn ndcg_full_depth_only_identity_is_perfect() {
    let votes = [7, 5, 3, 1];
    assert_eq!(ndcg_at_k(&[0, 1, 2, 3], &votes, 4), 1.0);
    // With binary relevance and K = n every ranking has NDCG 1 by
    // construction, so use K = n - 1 to separate.
    assert!(ndcg_at_k(&[3, 1, 2, 0], &votes, 3) < 1.0);
}

fn synthetic_corpus(questions: usize, seed: u64) -> crate::corpus::Corpus {
    let raw = generate_synthetic(&SyntheticConfig {
        num_questions: questions,
        seed,
        ..Default::default()
    });
    let vocab = Vocabulary::build(&raw, 1);
    index(&raw, vocab)
}

#[test]
fn oracle_scorer_is_perfect() {
    let corpus = synthetic_corpus(12, 5);
    let all: Vec<usize> = (0..corpus.questions.len()).collect();
    let report = evaluate(&corpus, &all, 3, 1, |q| Ok(oracle_scores(q))).unwrap();
    assert_eq!(report.p_at_1, 1.0);
    assert_eq!(report.mrr, 1.0);
    assert_eq!(report.ndcg, 1.0);
    assert_eq!(report.questions, 12);
}

#[test]
fn evaluate_rejects_empty_split() {
    let corpus = synthetic_corpus(5, 6);
    assert!(matches!(
        evaluate(&corpus, &[], 3, 1, |q| Ok(oracle_scores(q))),
        Err(EvalError::EmptySplit)
    ));
}

#[test]
fn metrics_invariant_under_monotone_transforms() {
    let corpus = synthetic_corpus(10, 7);
    let all: Vec<usize> = (0..corpus.questions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise: Vec<Vec<f64>> = corpus
        .questions
        .iter()
        .map(|q| q.answers.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let base = evaluate(&corpus, &all, 3, 1, |q| {
        let qi: usize = q.question_id[1..].parse().unwrap();
        Ok(noise[qi].clone())
    })
    .unwrap();
    let transformed = evaluate(&corpus, &all, 3, 1, |q| {
        let qi: usize = q.question_id[1..].parse().unwrap();
        Ok(noise[qi].iter().map(|&s| (3.0 * s).exp() + 7.0).collect())
    })
    .unwrap();

    assert_eq!(base.p_at_1, transformed.p_at_1);
    assert_eq!(base.mrr, transformed.mrr);
    assert_eq!(base.ndcg, transformed.ndcg);
}

#[test]
fn evaluate_parallel_matches_sequential() {
    let corpus = synthetic_corpus(20, 9);
    let all: Vec<usize> = (0..corpus.questions.len()).collect();
    let scorer = |q: &crate::corpus::Question| {
        Ok(q.answers
            .iter()
            .map(|a| (a.tokens[0] as f64).sin())
            .collect())
    };
    let seq = evaluate(&corpus, &all, 3, 1, scorer).unwrap();
    let par = evaluate(&corpus, &all, 3, 0, scorer).unwrap();
    assert_eq!(seq.p_at_1.to_bits(), par.p_at_1.to_bits());
    assert_eq!(seq.mrr.to_bits(), par.mrr.to_bits());
    assert_eq!(seq.ndcg.to_bits(), par.ndcg.to_bits());
}

fn hand_corpus(texts: &[&[&str]], votes: &[u64]) -> crate::corpus::Corpus {
    use crate::corpus::{RawAnswer, RawQuestion};
    let raw = RawCorpus {
        questions: vec![RawQuestion {
            question_id: "q".into(),
            tokens: vec!["root".into()],
            timestamp: None,
            answers: texts
                .iter()
                .zip(votes)
                .enumerate()
                .map(|(i, (toks, &v))| RawAnswer {
                    answer_id: format!("a{i}"),
                    tokens: toks.iter().map(|s| s.to_string()).collect(),
                    respondent_id: format!("r{i}"),
                    votes: v,
                    timestamp: None,
                })
                .collect(),
        }],
    };
    let vocab = Vocabulary::build(&raw, 1);
    index(&raw, vocab)
}

#[test]
fn similarity_identical_texts_all_one() {
    // Eight answers so both quartiles hold two answers each.
    let text: &[&str] = &["same", "words"];
    let corpus = hand_corpus(
        &[text, text, text, text, text, text, text, text],
        &[8, 7, 6, 5, 4, 3, 2, 1],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let emb = Tensor::new(
        corpus.vocab.len(),
        8,
        (0..corpus.vocab.len() * 8)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let report = analyze_similarity(&corpus, &emb);
    assert!((report.top_top - 1.0).abs() < 1e-12);
    assert!((report.top_bottom - 1.0).abs() < 1e-12);
    assert!((report.bottom_bottom - 1.0).abs() < 1e-12);
}

#[test]
fn similarity_orthogonal_toy() {
    // Top-quartile answers use word "x", bottom-quartile answers "y";
    // with orthogonal embeddings every top-bottom cosine is zero.
    let corpus = hand_corpus(
        &[
            &["x"],
            &["x"],
            &["m"],
            &["m"],
            &["m"],
            &["m"],
            &["y"],
            &["y"],
        ],
        &[8, 7, 6, 5, 4, 3, 2, 1],
    );
    let mut emb = Tensor::zeros(corpus.vocab.len(), 2);
    emb.set(corpus.vocab.index_of("x"), 0, 1.0);
    emb.set(corpus.vocab.index_of("y"), 1, 1.0);
    let report = analyze_similarity(&corpus, &emb);
    assert_eq!(report.top_bottom, 0.0);
    assert!((report.top_top - 1.0).abs() < 1e-12);
    assert_eq!(report.pair_counts, [1, 4, 1]);
}

#[test]
fn similarity_single_answer_quartiles_have_no_same_pairs() {
    let corpus = hand_corpus(&[&["x"], &["y"], &["z"], &["w"]], &[4, 3, 2, 1]);
    let emb = Tensor::ones(corpus.vocab.len(), 2);
    let report = analyze_similarity(&corpus, &emb);
    assert_eq!(report.pair_counts[0], 0);
    assert_eq!(report.pair_counts[1], 1);
    assert_eq!(report.questions_used, 1);
}

#[test]
fn similarity_skips_small_questions() {
    let corpus = hand_corpus(&[&["x"], &["y"], &["z"]], &[3, 2, 1]);
    let emb = Tensor::ones(corpus.vocab.len(), 2);
    let report = analyze_similarity(&corpus, &emb);
    assert_eq!(report.questions_used, 0);
    assert_eq!(report.questions_skipped, 1);
}

#[test]
fn similarity_scale_invariant() {
    let corpus = synthetic_corpus(30, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let emb = Tensor::new(
        corpus.vocab.len(),
        16,
        (0..corpus.vocab.len() * 16)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let a = analyze_similarity(&corpus, &emb);
    let b = analyze_similarity(&corpus, &emb.scale(7.5));
    assert!((a.top_top - b.top_top).abs() < 1e-9);
    assert!((a.bottom_bottom - b.bottom_bottom).abs() < 1e-9);
}

#[test]
fn histogram_bucket_placement() {
    use crate::corpus::{RawAnswer, RawCorpus, RawQuestion};
    let raw = RawCorpus {
        questions: vec![RawQuestion {
            question_id: "q".into(),
            tokens: vec!["t".into()],
            timestamp: Some(1000),
            answers: vec![
                RawAnswer {
                    answer_id: "a0".into(),
                    tokens: vec!["w".into()],
                    respondent_id: "r".into(),
                    votes: 1,
                    // 50 minutes after the question: bucket "<100 min".
                    timestamp: Some(1050),
                },
                RawAnswer {
                    answer_id: "a1".into(),
                    tokens: vec!["w".into()],
                    respondent_id: "r".into(),
                    votes: 2,
                    timestamp: Some(1000),
                },
            ],
        }],
    };
    let vocab = Vocabulary::build(&raw, 1);
    let corpus = index(&raw, vocab);
    let hist = interval_histogram(&corpus).unwrap();
    assert_eq!(hist.counts[0], 1); // zero-delay answer
    assert_eq!(hist.counts[2], 1); // [10, 100)
    assert_eq!(IntervalHistogram::bucket_label(2), "<100 min");
}

#[test]
fn histogram_requires_timestamps() {
    let corpus = hand_corpus(&[&["x"], &["y"]], &[2, 1]);
    assert!(matches!(
        interval_histogram(&corpus),
        Err(EvalError::MissingTimestamps)
    ));
}

#[test]
fn sign_test_cases() {
    // Perfectly split: p = 1.
    let t = sign_test(&[1.0, 0.0], &[0.0, 1.0]);
    assert_eq!((t.wins_a, t.wins_b), (1, 1));
    assert!((t.p_value - 1.0).abs() < 1e-12);

    // Ten straight wins: p = 2 * 2^-10.
    let a = vec![1.0; 10];
    let b = vec![0.0; 10];
    let t = sign_test(&a, &b);
    assert_eq!(t.wins_a, 10);
    assert!((t.p_value - 2.0 * 0.5f64.powi(10)).abs() < 1e-12);

    // All ties: no evidence.
    let t = sign_test(&[1.0, 2.0], &[1.0, 2.0]);
    assert_eq!(t.ties, 2);
    assert_eq!(t.p_value, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_stay_in_unit_interval(
        scores in proptest::collection::vec(-10.0f64..10.0, 2..7),
        vote_seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(vote_seed);
        let votes: Vec<u64> = scores.iter().map(|_| rng.gen_range(0..10)).collect();
        let ranking = rank_answers(&scores);
        for m in [p_at_1(&ranking, &votes), reciprocal_rank(&ranking, &votes), ndcg_at_k(&ranking, &votes, 3)] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }
}
