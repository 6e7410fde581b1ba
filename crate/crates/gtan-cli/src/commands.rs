//! Implementations of the CLI subcommands.

use anyhow::{bail, Context, Result};
use gtan_core::corpus::{
    self, generate_synthetic, write_corpus_file, CorpusStats, SplitName, SyntheticConfig,
    Vocabulary,
};
use gtan_core::eval::{analyze_similarity, evaluate, interval_histogram, oracle_scores};
use gtan_core::gradcheck::{grad_check, GradCheckConfig};
use gtan_core::model::{forward, AblationConfig, Model, QuestionInstance, ABLATION_FLAGS};
use gtan_core::tensor::{Tape, Tensor};
use gtan_core::train::{ensure_matches, evaluate_model, load_checkpoint, save_checkpoint, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::config::RunConfig;
use crate::dataset::{self, Dataset};

pub fn cmd_ingest(input: &Path, out_dir: &Path, config: &RunConfig) -> Result<()> {
    let stats = dataset::ingest(input, out_dir, config)?;
    print!("{}", corpus::render_stats("corpus", &stats));
    println!("dataset written to {}", out_dir.display());
    Ok(())
}

pub fn cmd_gen_synthetic(out: &Path, synthetic: &SyntheticConfig) -> Result<()> {
    let raw = generate_synthetic(synthetic);
    write_corpus_file(&raw, out)?;
    println!(
        "wrote {} questions x {} answers to {}",
        synthetic.num_questions,
        synthetic.answers_per_question,
        out.display()
    );
    Ok(())
}

fn init_model(data: &Dataset, config: &RunConfig) -> Result<Model> {
    let mut model = Model::init(
        config.model_config(),
        data.corpus.vocab.len(),
        data.corpus.respondents.table_rows(),
        config.seed,
    );
    if let Some(path) = &config.word_vectors {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading word vectors {path}"))?;
        let loaded = model.load_word_vectors(&text, &data.corpus.vocab)?;
        println!("loaded {loaded} pretrained word vectors");
    }
    Ok(model)
}

pub fn cmd_train(data_dir: &Path, out_dir: &Path, config: &RunConfig) -> Result<()> {
    let data = dataset::load(data_dir)?;
    let model = init_model(&data, config)?;
    let trainer = Trainer::new(
        &data.corpus,
        &data.split,
        &data.tfidf,
        &model,
        config.train_config(),
    )?;
    let (trained, report) = trainer.train(model)?;

    std::fs::create_dir_all(out_dir)?;
    save_checkpoint(&trained, &out_dir.join("checkpoint.ckpt"))?;
    let mut lines = String::new();
    for e in &report.epochs {
        lines.push_str(&serde_json::to_string(e)?);
        lines.push('\n');
    }
    std::fs::write(out_dir.join("report.jsonl"), lines)?;
    std::fs::write(out_dir.join("summary.txt"), report.render_summary())?;
    std::fs::write(out_dir.join("config.echo.txt"), config.echo())?;
    print!("{}", report.render_summary());
    println!(
        "checkpoint written to {}",
        out_dir.join("checkpoint.ckpt").display()
    );
    Ok(())
}

fn split_indices<'a>(data: &'a Dataset, split: &str) -> Result<&'a [usize]> {
    match SplitName::parse(split) {
        Some(name) => Ok(data.split.of(name)),
        None => bail!("unknown split {split:?} (train|val|test)"),
    }
}

pub fn cmd_evaluate(
    checkpoint: Option<&Path>,
    data_dir: &Path,
    split: &str,
    oracle: bool,
    out_dir: Option<&Path>,
    config: &RunConfig,
) -> Result<()> {
    let data = dataset::load(data_dir)?;
    let indices = split_indices(&data, split)?;

    let report = if oracle {
        evaluate(
            &data.corpus,
            indices,
            config.ndcg_k,
            config.eval_parallelism,
            |q| Ok(oracle_scores(q)),
        )?
    } else {
        let checkpoint = checkpoint.context("--checkpoint is required unless --oracle is set")?;
        let model = load_checkpoint(checkpoint)?;
        ensure_matches(&model, &config.model_config())?;
        check_tables(&model, &data)?;
        evaluate_model(
            &data.corpus,
            indices,
            &data.tfidf,
            &model,
            config.ndcg_k,
            config.eval_parallelism,
        )?
    };

    print!("{}", report.render());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.txt"), report.render())?;
        std::fs::write(dir.join("per_question.csv"), report.per_question_csv())?;
    }
    Ok(())
}

fn check_tables(model: &Model, data: &Dataset) -> Result<()> {
    if model.word_table.rows() != data.corpus.vocab.len() {
        bail!(
            "checkpoint word table has {} rows, dataset vocabulary has {}",
            model.word_table.rows(),
            data.corpus.vocab.len()
        );
    }
    if model.params.respondent_table.rows() != data.corpus.respondents.table_rows() {
        bail!(
            "checkpoint respondent table has {} rows, dataset has {}",
            model.params.respondent_table.rows(),
            data.corpus.respondents.table_rows()
        );
    }
    Ok(())
}

pub fn cmd_ablate(
    data_dir: &Path,
    out_dir: &Path,
    only: Option<&str>,
    config: &RunConfig,
) -> Result<()> {
    let data = dataset::load(data_dir)?;
    let variants: Vec<(String, AblationConfig)> = match only {
        Some(flag) => {
            let ablation = AblationConfig::default()
                .with_flag(flag)
                .with_context(|| format!("unknown ablation flag {flag:?}"))?;
            let label = ABLATION_FLAGS
                .iter()
                .find(|&&(f, _)| f == flag)
                .map(|&(_, label)| label.to_string())
                .expect("flag known");
            vec![(label, ablation)]
        }
        None => std::iter::once(("Full".to_string(), AblationConfig::default()))
            .chain(ABLATION_FLAGS.iter().map(|&(flag, label)| {
                (
                    label.to_string(),
                    AblationConfig::default().with_flag(flag).expect("known"),
                )
            }))
            .collect(),
    };

    let mut table = String::from("Method          P@1     MRR     NDCG@K\n");
    for (label, ablation) in variants {
        let mut run_config = config.clone();
        run_config.ablation = ablation;
        let model = init_model(&data, &run_config)?;
        let trainer = Trainer::new(
            &data.corpus,
            &data.split,
            &data.tfidf,
            &model,
            run_config.train_config(),
        )?;
        let (trained, _) = trainer.train(model)?;
        let report = evaluate_model(
            &data.corpus,
            &data.split.test,
            &data.tfidf,
            &trained,
            run_config.ndcg_k,
            run_config.eval_parallelism,
        )?;
        table.push_str(&format!(
            "{label:<15} {:.4}  {:.4}  {:.4}\n",
            report.p_at_1, report.mrr, report.ndcg
        ));
        println!(
            "{label:<15} {:.4}  {:.4}  {:.4}",
            report.p_at_1, report.mrr, report.ndcg
        );
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("ablation.txt"), &table)?;
    std::fs::write(out_dir.join("config.echo.txt"), config.echo())?;
    Ok(())
}

pub fn cmd_rank(
    checkpoint: &Path,
    data_dir: &Path,
    input: &Path,
    explain: bool,
    dump_graph: Option<&Path>,
    config: &RunConfig,
) -> Result<()> {
    let data = dataset::load(data_dir)?;
    let model = load_checkpoint(checkpoint)?;
    ensure_matches(&model, &config.model_config())?;
    check_tables(&model, &data)?;

    let raw = corpus::read_corpus_file(input)?;
    let mut graph_dump = String::new();
    for raw_q in &raw.questions {
        // Unknown words map to UNK; unknown respondents use the reserved row.
        let question = index_question(raw_q, &data.corpus.vocab);
        let unknown_words: usize = question
            .tokens
            .iter()
            .chain(question.answers.iter().flat_map(|a| &a.tokens))
            .filter(|&&t| t == corpus::UNK)
            .count();
        if unknown_words > 0 {
            eprintln!(
                "warning: question {}: {unknown_words} unknown word occurrences mapped to {}",
                question.question_id,
                corpus::UNK_TOKEN
            );
        }
        for a in &question.answers {
            if !data.corpus.respondents.is_known(&a.respondent_id) {
                eprintln!(
                    "warning: unknown respondent {} uses the reserved row",
                    a.respondent_id
                );
            }
        }

        let inst =
            QuestionInstance::prepare(&question, &data.tfidf, &data.corpus.respondents, &model)?;
        if dump_graph.is_some() {
            graph_dump.push_str(&inst.graph.edge_list_dump(&data.corpus.vocab));
        }
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let pass = forward(&mut tape, &bound, &model, &inst)?;
        let out = pass.extract(&tape);

        println!("question {}", question.question_id);
        let ranking = gtan_core::eval::rank_answers(&out.scores);
        for (rank, &i) in ranking.iter().enumerate() {
            println!(
                "  {} {} score {:.6}",
                rank + 1,
                question.answers[i].answer_id,
                out.scores[i]
            );
        }
        if explain {
            print_explanation(&question, &inst, &out, &data.corpus.vocab);
        }
    }
    if let Some(path) = dump_graph {
        std::fs::write(path, graph_dump)?;
    }
    Ok(())
}

fn index_question(raw: &corpus::RawQuestion, vocab: &Vocabulary) -> corpus::Question {
    corpus::Question {
        question_id: raw.question_id.clone(),
        tokens: raw.tokens.iter().map(|t| vocab.index_of(t)).collect(),
        timestamp: raw.timestamp,
        answers: raw
            .answers
            .iter()
            .map(|a| corpus::Answer {
                answer_id: a.answer_id.clone(),
                tokens: a.tokens.iter().map(|t| vocab.index_of(t)).collect(),
                respondent_id: a.respondent_id.clone(),
                votes: a.votes,
                timestamp: a.timestamp,
            })
            .collect(),
    }
}

fn print_explanation(
    question: &corpus::Question,
    inst: &QuestionInstance,
    out: &gtan_core::model::ForwardOutput,
    vocab: &Vocabulary,
) {
    let format_weights = |tokens: &[corpus::TokenId], weights: &[f64]| -> String {
        tokens
            .iter()
            .zip(weights)
            .map(|(&t, w)| format!("{}:{:.4}", vocab.token(t), w))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (i, answer) in question.answers.iter().enumerate() {
        println!("  explain {}", answer.answer_id);
        if let Some(alphas) = &out.alphas {
            println!(
                "    question attention: {}",
                format_weights(&inst.question_tokens, &alphas[i])
            );
        }
        if let Some(betas) = &out.betas {
            // Answer token sequences are stored in canonical order; map the
            // input position back through the permutation.
            let canonical_pos = inst
                .canonical_to_input
                .iter()
                .position(|&input| input == i)
                .expect("permutation covers all answers");
            println!(
                "    answer attention:   {}",
                format_weights(&inst.answer_tokens[canonical_pos], &betas[i])
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_gradcheck(
    seed: u64,
    epsilon: f64,
    dim: usize,
    att_dim: usize,
    hidden_dim: usize,
    layers: usize,
    fc_layers: usize,
    answers: usize,
    ablation: Option<&str>,
    trainable_words: bool,
) -> Result<()> {
    let base = GradCheckConfig {
        dim,
        att_dim,
        hidden_dim,
        layers,
        fc_layers,
        answers,
        seed,
        epsilon,
        trainable_word_embeddings: trainable_words,
        ..Default::default()
    };
    let variants: Vec<(String, AblationConfig)> = match ablation {
        None => vec![("full".into(), AblationConfig::default())],
        Some("all") => std::iter::once(("full".to_string(), AblationConfig::default()))
            .chain(ABLATION_FLAGS.iter().map(|&(flag, _)| {
                (
                    flag.to_string(),
                    AblationConfig::default().with_flag(flag).expect("known"),
                )
            }))
            .collect(),
        Some(flags) => {
            let ablation = AblationConfig::from_flags(flags)
                .with_context(|| format!("unknown ablation flag in {flags:?}"))?;
            vec![(flags.to_string(), ablation)]
        }
    };

    let mut all_passed = true;
    for (name, ablation) in variants {
        let report = grad_check(&GradCheckConfig {
            ablation,
            ..base.clone()
        })?;
        println!("variant {name}");
        print!("{}", report.render());
        all_passed &= report.passed;
    }
    if !all_passed {
        bail!("gradient check failed");
    }
    Ok(())
}

pub fn cmd_analyze_sim(
    corpus_path: &Path,
    dim: usize,
    seed: u64,
    min_word_freq: u64,
) -> Result<()> {
    let raw = corpus::read_corpus_file(corpus_path)?;
    let vocab = Vocabulary::build(&raw, min_word_freq);
    let corpus = corpus::index(&raw, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embeddings = Tensor::new(
        corpus.vocab.len(),
        dim,
        (0..corpus.vocab.len() * dim)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect(),
    )
    .expect("shape matches data");
    let report = analyze_similarity(&corpus, &embeddings);
    print!("{}", report.render());
    Ok(())
}

pub fn cmd_stats(data_dir: &Path) -> Result<()> {
    let data = dataset::load(data_dir)?;
    let stats = CorpusStats::of(&data.corpus);
    print!("{}", corpus::render_stats("corpus", &stats));
    match interval_histogram(&data.corpus) {
        Ok(hist) => {
            println!("\nanswer delay after question:");
            print!("{}", hist.render());
        }
        Err(_) => println!("\n(no timestamps; skipping the answer-delay histogram)"),
    }
    Ok(())
}
