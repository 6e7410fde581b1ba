use super::*;
use crate::corpus::{self, generate_synthetic, SyntheticConfig, Vocabulary};
use crate::model::{AblationConfig, ModelConfig};
use crate::tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn make_pairs_cases() {
    let mut r = rng(1);
    assert_eq!(make_pairs(&[3, 1, 1], 0, &mut r), vec![(0, 1), (0, 2)]);
    assert_eq!(make_pairs(&[2, 2, 2], 0, &mut r), vec![]);

    // Brute-force enumeration oracle.
    let votes = [5u64, 3, 1];
    let mut expect = Vec::new();
    for i in 0..votes.len() {
        for j in 0..votes.len() {
            if votes[i] > votes[j] {
                expect.push((i, j));
            }
        }
    }
    assert_eq!(make_pairs(&votes, 0, &mut r), expect);
    assert_eq!(expect.len(), 3);
}

#[test]
fn make_pairs_subsampling_is_deterministic() {
    let votes = [9u64, 7, 5, 3, 1];
    let full = make_pairs(&votes, 0, &mut rng(2));
    let a = make_pairs(&votes, 4, &mut rng(7));
    let b = make_pairs(&votes, 4, &mut rng(7));
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    for p in &a {
        assert!(full.contains(p));
    }
}

fn loss_value(scores: &[f64], votes: &[u64], margin: f64) -> f64 {
    let mut tape = Tape::new();
    let score_vars: Vec<Var> = scores
        .iter()
        .map(|&s| tape.leaf(Tensor::scalar(s)))
        .collect();
    let pairs = make_pairs(votes, 0, &mut rng(0));
    let loss = question_loss(&mut tape, &score_vars, &pairs, margin).unwrap();
    tape.value(loss).value().unwrap()
}

#[test]
fn question_loss_hand_case() {
    // Pairs (0,1), (0,2), (1,2):
    //   max(0, 1 + 0.9 - 0.2) + max(0, 1 - 0.1 - 0.2) + max(0, 1 - 0.1 - 0.9)
    //   = 1.7 + 0.7 + 0.0 = 2.4
    let loss = loss_value(&[0.2, 0.9, -0.1], &[3, 2, 1], 1.0);
    assert!((loss - 2.4).abs() < 1e-12, "loss {loss}");
}

#[test]
fn question_loss_boundaries() {
    // Margins satisfied: zero loss.
    assert_eq!(loss_value(&[3.0, 1.5, 0.0], &[3, 2, 1], 1.0), 0.0);
    // Equal scores: every pair contributes exactly the margin.
    assert_eq!(loss_value(&[0.5, 0.5, 0.5], &[3, 2, 1], 1.0), 3.0);
    // No pairs: zero constant.
    assert_eq!(loss_value(&[1.0, 2.0], &[4, 4], 1.0), 0.0);
}

fn prepared_corpus(config: &SyntheticConfig) -> (corpus::Corpus, DatasetSplit, TfidfIndex) {
    let raw = generate_synthetic(config);
    let vocab = Vocabulary::build(&raw, 1);
    let corpus = corpus::index(&raw, vocab);
    let split = corpus::split_corpus(&corpus, config.seed).unwrap();
    let tfidf = TfidfIndex::from_train(&corpus, &split);
    (corpus, split, tfidf)
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        dim: 8,
        att_dim: 8,
        hidden_dim: 8,
        layers: 1,
        fc_layers: 2,
        ablation: AblationConfig::default(),
        ..Default::default()
    }
}

#[test]
fn single_question_overfits() {
    // One question, two cleanly separable answers; 200 steps at a healthy
    // learning rate drive the hinge loss to ~zero.
    let (corpus, _, _) = prepared_corpus(&SyntheticConfig {
        num_questions: 12,
        answers_per_question: 2,
        respondent_pool: 4,
        seed: 5,
        ..Default::default()
    });
    let tfidf = TfidfIndex::from_all(&corpus);
    let model_config = tiny_model_config();
    let mut model = crate::model::Model::init(
        model_config,
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        11,
    );
    let q = &corpus.questions[0];
    let inst = QuestionInstance::prepare(q, &tfidf, &corpus.respondents, &model).unwrap();
    let pairs = make_pairs(&inst.votes, 0, &mut rng(0));
    assert_eq!(pairs.len(), 1);

    let shapes: Vec<(usize, usize)> = model.entry_shapes().into_iter().map(|(_, s)| s).collect();
    let mut adam = Adam::new(0.01, &shapes);
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let pass = forward(&mut tape, &bound, &model, &inst).unwrap();
        let loss = question_loss(&mut tape, &pass.scores, &pairs, 1.0).unwrap();
        last = tape.value(loss).value().unwrap();
        if last < 0.01 {
            break;
        }
        let mut grads = tape.backward(loss).unwrap();
        let grad_tensors: Vec<Tensor> = bound
            .entry_vars
            .iter()
            .zip(&shapes)
            .map(|(&v, &s)| grads.take(v, s))
            .collect();
        let mut trainable = model.trainable_mut();
        adam.step(&mut trainable, &grad_tensors).unwrap();
    }
    assert!(last < 0.01, "loss stayed at {last}");
}

#[test]
fn one_step_decreases_active_hinge() {
    // Descent sanity: with a small learning rate, one step on an active
    // pair strictly lowers that pair's hinge term.
    let (corpus, _, _) = prepared_corpus(&SyntheticConfig {
        num_questions: 12,
        answers_per_question: 2,
        respondent_pool: 4,
        seed: 9,
        ..Default::default()
    });
    let tfidf = TfidfIndex::from_all(&corpus);
    let mut model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        13,
    );
    let q = &corpus.questions[1];
    let inst = QuestionInstance::prepare(q, &tfidf, &corpus.respondents, &model).unwrap();
    let pairs = make_pairs(&inst.votes, 0, &mut rng(0));

    let evaluate_loss = |model: &crate::model::Model| {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let pass = forward(&mut tape, &bound, model, &inst).unwrap();
        let loss = question_loss(&mut tape, &pass.scores, &pairs, 1.0).unwrap();
        (tape, bound, loss)
    };

    let (tape, bound, loss) = evaluate_loss(&model);
    let before = tape.value(loss).value().unwrap();
    assert!(before > 0.0, "pair should start active");

    let shapes: Vec<(usize, usize)> = model.entry_shapes().into_iter().map(|(_, s)| s).collect();
    let mut grads = tape.backward(loss).unwrap();
    let grad_tensors: Vec<Tensor> = bound
        .entry_vars
        .iter()
        .zip(&shapes)
        .map(|(&v, &s)| grads.take(v, s))
        .collect();
    let mut adam = Adam::new(1e-4, &shapes);
    let mut trainable = model.trainable_mut();
    adam.step(&mut trainable, &grad_tensors).unwrap();

    let (tape, _, loss) = evaluate_loss(&model);
    let after = tape.value(loss).value().unwrap();
    assert!(after < before, "{after} !< {before}");
}

fn quick_train_config(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs,
        patience: 0,
        seed,
        eval_parallelism: 1,
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (corpus, split, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 15,
        seed: 21,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        3,
    );
    let trainer = Trainer::new(
        &corpus,
        &split,
        &tfidf,
        &model,
        quick_train_config(3, 0.0, 21),
    )
    .unwrap();
    let (trained, _) = trainer.train(model.clone()).unwrap();
    assert_eq!(trained, model);
}

#[test]
fn training_is_deterministic_under_seed() {
    let (corpus, split, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 15,
        seed: 23,
        ..Default::default()
    });
    let run = || {
        let model = crate::model::Model::init(
            tiny_model_config(),
            corpus.vocab.len(),
            corpus.respondents.table_rows(),
            7,
        );
        let trainer = Trainer::new(
            &corpus,
            &split,
            &tfidf,
            &model,
            quick_train_config(3, 0.005, 99),
        )
        .unwrap();
        let (trained, report) = trainer.train(model).unwrap();
        (trained, report.deterministic_view())
    };
    let (model_a, view_a) = run();
    let (model_b, view_b) = run();
    assert_eq!(view_a, view_b);
    assert_eq!(model_a, model_b);
}

#[test]
fn all_tied_votes_never_update() {
    let (mut corpus, split, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 15,
        seed: 29,
        ..Default::default()
    });
    for q in &mut corpus.questions {
        for a in &mut q.answers {
            a.votes = 7;
        }
    }
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        5,
    );
    let trainer = Trainer::new(
        &corpus,
        &split,
        &tfidf,
        &model,
        quick_train_config(2, 0.01, 31),
    )
    .unwrap();
    let (trained, report) = trainer.train(model.clone()).unwrap();
    assert_eq!(trained, model);
    assert_eq!(report.epochs[0].train_loss, 0.0);
}

#[test]
fn divergence_is_reported_with_question_and_epoch() {
    let (corpus, split, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 15,
        seed: 37,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        9,
    );
    let config = TrainConfig {
        learning_rate: 1e200,
        grad_clip: 0.0,
        epochs: 5,
        patience: 0,
        seed: 41,
        eval_parallelism: 1,
        ..Default::default()
    };
    let trainer = Trainer::new(&corpus, &split, &tfidf, &model, config).unwrap();
    match trainer.train(model) {
        Err(TrainError::Diverged { question_id, epoch }) => {
            assert!(!question_id.is_empty());
            assert!(epoch >= 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn checkpoint_roundtrip_is_bitwise() {
    let (corpus, _, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 12,
        seed: 43,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        17,
    );

    let dir = std::env::temp_dir().join(format!("gtan-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, model);

    // Saving the loaded model reproduces the file byte for byte.
    let path2 = dir.join("model2.ckpt");
    save_checkpoint(&loaded, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );

    // Forward scores agree exactly.
    let q = &corpus.questions[0];
    let inst_a = QuestionInstance::prepare(q, &tfidf, &corpus.respondents, &model).unwrap();
    let inst_b = QuestionInstance::prepare(q, &tfidf, &corpus.respondents, &loaded).unwrap();
    let sa = score_question(&model, &inst_a).unwrap();
    let sb = score_question(&loaded, &inst_b).unwrap();
    for (a, b) in sa.iter().zip(&sb) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn truncated_checkpoint_is_corrupt() {
    let (corpus, _, _) = prepared_corpus(&SyntheticConfig {
        num_questions: 12,
        seed: 47,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        19,
    );
    let dir = std::env::temp_dir().join(format!("gtan-ckpt-trunc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    match load_checkpoint(&cut) {
        Err(CheckpointError::Corrupt(_)) => {}
        other => panic!("expected corrupt error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn dimension_mismatch_names_both_sides() {
    let (corpus, _, _) = prepared_corpus(&SyntheticConfig {
        num_questions: 12,
        seed: 53,
        ..Default::default()
    });
    let mut small = tiny_model_config();
    small.dim = 4;
    let model = crate::model::Model::init(
        small,
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        23,
    );
    let dir = std::env::temp_dir().join(format!("gtan-ckpt-dim-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    let mut expected = tiny_model_config();
    expected.dim = 64;
    let err = ensure_matches(&loaded, &expected).unwrap_err().to_string();
    assert!(err.contains('4') && err.contains("64"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_report_selects_best_epoch() {
    let (corpus, split, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 15,
        seed: 59,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        29,
    );
    let trainer = Trainer::new(
        &corpus,
        &split,
        &tfidf,
        &model,
        quick_train_config(4, 0.01, 61),
    )
    .unwrap();
    let (_, report) = trainer.train(model).unwrap();
    let best_mrr = report.epochs[report.selected_epoch - 1].val_mrr;
    for e in &report.epochs {
        assert!(e.val_mrr <= best_mrr);
    }
}

#[test]
fn untrained_model_scores_at_chance() {
    // 100 questions x 5 answers: an untrained model's P@1 should land
    // within 3 sigma of 1/5 (binomial se ~ 0.04).
    let (corpus, _, tfidf) = prepared_corpus(&SyntheticConfig {
        num_questions: 100,
        seed: 67,
        ..Default::default()
    });
    let model = crate::model::Model::init(
        tiny_model_config(),
        corpus.vocab.len(),
        corpus.respondents.table_rows(),
        31,
    );
    let all: Vec<usize> = (0..corpus.questions.len()).collect();
    let report = evaluate_model(&corpus, &all, &tfidf, &model, 3, 1).unwrap();
    assert!(
        (report.p_at_1 - 0.2).abs() < 3.0 * 0.04,
        "untrained P@1 {:.3} is far from chance",
        report.p_at_1
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hinge_loss_is_nonnegative(
        scores in proptest::collection::vec(-3.0f64..3.0, 2..6),
        seed in 0u64..100,
    ) {
        let mut r = rng(seed);
        let votes: Vec<u64> = scores.iter().map(|_| r.gen_range(0..4)).collect();
        let loss = loss_value(&scores, &votes, 1.0);
        prop_assert!(loss >= 0.0);
    }
}
