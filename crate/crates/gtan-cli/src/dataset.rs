//! Prepared-dataset directory: the on-disk artifacts ingestion produces and
//! every other command loads.
//!
//! ```text
//! corpus.jsonl     filtered corpus, one question record per line
//! vocab.tsv        token<TAB>corpus_freq<TAB>doc_freq, UNK row first
//! idf.tsv          "#docs<TAB>N" header, then token<TAB>idf per index
//! splits.tsv       question_id<TAB>train|val|test
//! stats.txt        corpus statistics table
//! config.echo.txt  effective configuration of the ingest run
//! ```

use anyhow::{bail, Context, Result};
use gtan_core::corpus::{
    self, read_corpus_file, split_corpus, write_corpus_file, CorpusStats, DatasetSplit, RawCorpus,
    SplitName, TfidfIndex, Vocabulary, UNK_TOKEN,
};
use std::collections::HashMap;
use std::path::Path;

use crate::config::RunConfig;

pub struct Dataset {
    pub corpus: corpus::Corpus,
    pub split: DatasetSplit,
    pub tfidf: TfidfIndex,
}

/// Filters, splits, and indexes a raw corpus, writing all artifacts.
pub fn ingest(input: &Path, out_dir: &Path, config: &RunConfig) -> Result<CorpusStats> {
    let raw = read_corpus_file(input)?;
    let (corpus, filtered_raw, report) = corpus::prepare(raw, &config.filter_config())?;
    let split = split_corpus(&corpus, config.seed)?;
    let tfidf = TfidfIndex::from_train(&corpus, &split);

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_corpus_file(&filtered_raw, &out_dir.join("corpus.jsonl"))?;

    let mut vocab_tsv = String::new();
    let (unk_cf, unk_df) = corpus.vocab.unk_stats();
    vocab_tsv.push_str(&format!("{UNK_TOKEN}\t{unk_cf}\t{unk_df}\n"));
    for (token, cf, df) in corpus.vocab.rows() {
        vocab_tsv.push_str(&format!("{token}\t{cf}\t{df}\n"));
    }
    std::fs::write(out_dir.join("vocab.tsv"), vocab_tsv)?;

    let mut idf_tsv = format!("#docs\t{}\n", tfidf.train_docs());
    for (i, idf) in tfidf.idf_table().iter().enumerate() {
        idf_tsv.push_str(&format!("{}\t{idf:?}\n", corpus.vocab.token(i)));
    }
    std::fs::write(out_dir.join("idf.tsv"), idf_tsv)?;

    let mut splits_tsv = String::new();
    let name_of = |qi: usize| -> &'static str {
        if split.train.contains(&qi) {
            "train"
        } else if split.val.contains(&qi) {
            "val"
        } else {
            "test"
        }
    };
    for (qi, q) in corpus.questions.iter().enumerate() {
        splits_tsv.push_str(&format!("{}\t{}\n", q.question_id, name_of(qi)));
    }
    std::fs::write(out_dir.join("splits.tsv"), splits_tsv)?;

    let stats = CorpusStats::of(&corpus);
    let mut stats_text = corpus::render_stats("corpus", &stats);
    stats_text.push('\n');
    for (pass, p) in report.passes.iter().enumerate() {
        stats_text.push_str(&format!(
            "filter pass {}: removed {} answers, {} questions\n",
            pass + 1,
            p.answers_removed,
            p.questions_removed
        ));
    }
    std::fs::write(out_dir.join("stats.txt"), stats_text)?;
    std::fs::write(out_dir.join("config.echo.txt"), config.echo())?;
    Ok(stats)
}

/// Loads a dataset directory back into memory.
pub fn load(dir: &Path) -> Result<Dataset> {
    let raw: RawCorpus = read_corpus_file(&dir.join("corpus.jsonl"))
        .with_context(|| format!("loading {}", dir.join("corpus.jsonl").display()))?;

    let vocab_text = std::fs::read_to_string(dir.join("vocab.tsv"))?;
    let mut rows = Vec::new();
    let mut unk = (0u64, 0u64);
    for (ln, line) in vocab_text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            bail!("vocab.tsv:{}: expected 3 fields", ln + 1);
        }
        let cf: u64 = fields[1].parse().context("vocab corpus_freq")?;
        let df: u64 = fields[2].parse().context("vocab doc_freq")?;
        if ln == 0 {
            if fields[0] != UNK_TOKEN {
                bail!("vocab.tsv: first row must be {UNK_TOKEN}");
            }
            unk = (cf, df);
        } else {
            rows.push((fields[0].to_string(), cf, df));
        }
    }
    let vocab = Vocabulary::from_rows(rows, unk.0, unk.1);
    let corpus = corpus::index(&raw, vocab);

    let idf_text = std::fs::read_to_string(dir.join("idf.tsv"))?;
    let mut lines = idf_text.lines();
    let header = lines.next().context("idf.tsv is empty")?;
    let train_docs: usize = header
        .strip_prefix("#docs\t")
        .context("idf.tsv: missing #docs header")?
        .parse()?;
    let mut idf = Vec::new();
    for (ln, line) in lines.enumerate() {
        let (_, value) = line
            .split_once('\t')
            .with_context(|| format!("idf.tsv:{}", ln + 2))?;
        idf.push(value.parse::<f64>()?);
    }
    if idf.len() != corpus.vocab.len() {
        bail!(
            "idf.tsv has {} entries for a vocabulary of {}",
            idf.len(),
            corpus.vocab.len()
        );
    }
    let tfidf = TfidfIndex::from_idf(idf, train_docs);

    let splits_text = std::fs::read_to_string(dir.join("splits.tsv"))?;
    let index_of: HashMap<&str, usize> = corpus
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.question_id.as_str(), i))
        .collect();
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (ln, line) in splits_text.lines().enumerate() {
        let (qid, name) = line
            .split_once('\t')
            .with_context(|| format!("splits.tsv:{}", ln + 1))?;
        let qi = *index_of
            .get(qid)
            .with_context(|| format!("splits.tsv:{}: unknown question {qid}", ln + 1))?;
        match SplitName::parse(name) {
            Some(SplitName::Train) => split.train.push(qi),
            Some(SplitName::Val) => split.val.push(qi),
            Some(SplitName::Test) => split.test.push(qi),
            None => bail!("splits.tsv:{}: unknown split {name:?}", ln + 1),
        }
    }
    let assigned = split.train.len() + split.val.len() + split.test.len();
    if assigned != corpus.questions.len() {
        bail!(
            "splits.tsv assigns {assigned} questions, corpus has {}",
            corpus.questions.len()
        );
    }

    Ok(Dataset {
        corpus,
        split,
        tfidf,
    })
}
