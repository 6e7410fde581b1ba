//! Corpus ingestion: tokenization, noise filtering, vocabulary and TF-IDF
//! statistics, train/validation/test splitting, and synthetic corpus
//! generation.
//!
//! The pipeline is string-first: [`RawCorpus`] holds tokenized text,
//! [`filter`] removes noisy respondents/answers/questions until the corpus
//! stops shrinking, and [`index`] maps the survivors through a
//! [`Vocabulary`] (rare words become `UNK`) into the id-based [`Corpus`]
//! used by the model.

mod io;
mod synthetic;
mod tfidf;

pub use io::{parse_corpus_line, read_corpus_file, render_stats, to_records, write_corpus_file};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use tfidf::TfidfIndex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

pub type TokenId = usize;

/// Reserved vocabulary index for out-of-vocabulary words.
pub const UNK: TokenId = 0;
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty after filtering")]
    EmptyAfterFilter,
    #[error("need at least {need} questions to split, have {have}")]
    TooFewQuestions { have: usize, need: usize },
}

// ---------------------------------------------------------------------------
// String-level corpus (pre-vocabulary)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnswer {
    pub answer_id: String,
    pub tokens: Vec<String>,
    pub respondent_id: String,
    pub votes: u64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuestion {
    pub question_id: String,
    pub tokens: Vec<String>,
    pub answers: Vec<RawAnswer>,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub questions: Vec<RawQuestion>,
}

/// Lowercases, splits on whitespace, strips leading/trailing ASCII
/// punctuation, and drops empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Respondents with fewer answers than this lose all their answers.
    pub min_resp_answers: usize,
    /// Answers with fewer tokens than this are removed.
    pub min_answer_words: usize,
    /// Questions with fewer answers than this are removed.
    pub min_answers: usize,
    /// Questions with more answers than this are removed.
    pub max_answers: usize,
    /// Words occurring fewer times than this map to `UNK`.
    pub min_word_freq: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_resp_answers: 5,
            min_answer_words: 5,
            min_answers: 5,
            max_answers: 1000,
            min_word_freq: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassStats {
    pub answers_removed: usize,
    pub questions_removed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilterReport {
    pub passes: Vec<PassStats>,
}

/// Applies the respondent / answer-length / answer-count filters until the
/// corpus stops changing. Each pass evaluates every rule against the state
/// at the start of the pass, then applies all removals at once, so one
/// removal's knock-on effects surface in the next pass.
pub fn filter(mut raw: RawCorpus, config: &FilterConfig) -> (RawCorpus, FilterReport) {
    let mut report = FilterReport::default();
    loop {
        let mut resp_counts: HashMap<String, usize> = HashMap::new();
        for q in &raw.questions {
            for a in &q.answers {
                *resp_counts.entry(a.respondent_id.clone()).or_default() += 1;
            }
        }

        let mut answers_removed = 0;
        let mut questions_removed = 0;
        let mut kept_questions = Vec::with_capacity(raw.questions.len());
        for q in raw.questions {
            let n_before = q.answers.len();
            if n_before < config.min_answers || n_before > config.max_answers || q.tokens.is_empty()
            {
                questions_removed += 1;
                answers_removed += n_before;
                continue;
            }
            let mut kept = q;
            kept.answers.retain(|a| {
                resp_counts[&a.respondent_id] >= config.min_resp_answers
                    && a.tokens.len() >= config.min_answer_words
            });
            answers_removed += n_before - kept.answers.len();
            kept_questions.push(kept);
        }
        raw = RawCorpus {
            questions: kept_questions,
        };

        report.passes.push(PassStats {
            answers_removed,
            questions_removed,
        });
        if answers_removed == 0 && questions_removed == 0 {
            break;
        }
    }
    (raw, report)
}

// ---------------------------------------------------------------------------
// Vocabulary and the id-based corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_index: HashMap<String, TokenId>,
    index_to_token: Vec<String>,
    corpus_freq: Vec<u64>,
    doc_freq: Vec<u64>,
}

impl Vocabulary {
    /// Builds the vocabulary from a filtered corpus: words with corpus
    /// frequency below `min_word_freq` are left out and later map to `UNK`.
    /// Index order is by first occurrence, starting at 1 (`UNK` is 0).
    pub fn build(raw: &RawCorpus, min_word_freq: u64) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        let mut doc_sets: Vec<HashSet<&str>> = Vec::new();
        for q in &raw.questions {
            let texts = std::iter::once(&q.tokens).chain(q.answers.iter().map(|a| &a.tokens));
            for tokens in texts {
                let mut doc: HashSet<&str> = HashSet::new();
                for t in tokens {
                    let e = freq.entry(t.as_str()).or_insert(0);
                    if *e == 0 {
                        order.push(t.as_str());
                    }
                    *e += 1;
                    doc.insert(t.as_str());
                }
                doc_sets.push(doc);
            }
        }

        let mut token_to_index = HashMap::new();
        let mut index_to_token = vec![UNK_TOKEN.to_string()];
        let mut corpus_freq = vec![0u64];
        for t in order {
            let f = freq[t];
            if f >= min_word_freq {
                token_to_index.insert(t.to_string(), index_to_token.len());
                index_to_token.push(t.to_string());
                corpus_freq.push(f);
            } else {
                corpus_freq[UNK] += f;
            }
        }

        let mut doc_freq = vec![0u64; index_to_token.len()];
        for doc in doc_sets {
            let mut unk_seen = false;
            for t in doc {
                match token_to_index.get(t) {
                    Some(&i) => doc_freq[i] += 1,
                    None => unk_seen = true,
                }
            }
            if unk_seen {
                doc_freq[UNK] += 1;
            }
        }

        Self {
            token_to_index,
            index_to_token,
            corpus_freq,
            doc_freq,
        }
    }

    /// Reconstructs a vocabulary from (token, corpus_freq, doc_freq) rows in
    /// index order (excluding `UNK`, which is re-derived).
    pub fn from_rows(rows: Vec<(String, u64, u64)>, unk_freq: u64, unk_doc_freq: u64) -> Self {
        let mut token_to_index = HashMap::new();
        let mut index_to_token = vec![UNK_TOKEN.to_string()];
        let mut corpus_freq = vec![unk_freq];
        let mut doc_freq = vec![unk_doc_freq];
        for (token, cf, df) in rows {
            token_to_index.insert(token.clone(), index_to_token.len());
            index_to_token.push(token);
            corpus_freq.push(cf);
            doc_freq.push(df);
        }
        Self {
            token_to_index,
            index_to_token,
            corpus_freq,
            doc_freq,
        }
    }

    /// Total number of indices, `UNK` included.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.len() <= 1
    }

    /// Number of retained real words (excludes `UNK`).
    pub fn word_count(&self) -> usize {
        self.index_to_token.len() - 1
    }

    pub fn index_of(&self, token: &str) -> TokenId {
        self.token_to_index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: TokenId) -> &str {
        &self.index_to_token[index]
    }

    pub fn corpus_freq(&self, index: TokenId) -> u64 {
        self.corpus_freq[index]
    }

    pub fn doc_freq(&self, index: TokenId) -> u64 {
        self.doc_freq[index]
    }

    /// Rows for serialization, excluding `UNK`.
    pub fn rows(&self) -> impl Iterator<Item = (&str, u64, u64)> {
        (1..self.len()).map(|i| {
            (
                self.index_to_token[i].as_str(),
                self.corpus_freq[i],
                self.doc_freq[i],
            )
        })
    }

    pub fn unk_stats(&self) -> (u64, u64) {
        (self.corpus_freq[UNK], self.doc_freq[UNK])
    }
}

#[derive(Debug, Clone)]
pub struct Answer {
    pub answer_id: String,
    pub tokens: Vec<TokenId>,
    pub respondent_id: String,
    pub votes: u64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct Question {
    pub question_id: String,
    pub tokens: Vec<TokenId>,
    pub answers: Vec<Answer>,
    pub timestamp: Option<i64>,
}

/// Maps respondent ids to embedding-table rows; the row after the last
/// known respondent is reserved for unseen respondents.
#[derive(Debug, Clone, Default)]
pub struct RespondentIndex {
    id_to_row: HashMap<String, usize>,
    ids: Vec<String>,
}

impl RespondentIndex {
    pub fn build(raw: &RawCorpus) -> Self {
        let mut index = Self::default();
        for q in &raw.questions {
            for a in &q.answers {
                index.intern(&a.respondent_id);
            }
        }
        index
    }

    fn intern(&mut self, id: &str) {
        if !self.id_to_row.contains_key(id) {
            self.id_to_row.insert(id.to_string(), self.ids.len());
            self.ids.push(id.to_string());
        }
    }

    pub fn row_of(&self, id: &str) -> usize {
        self.id_to_row.get(id).copied().unwrap_or(self.ids.len())
    }

    pub fn is_known(&self, id: &str) -> bool {
        self.id_to_row.contains_key(id)
    }

    pub fn unk_row(&self) -> usize {
        self.ids.len()
    }

    /// Rows in the embedding table, unknown-respondent row included.
    pub fn table_rows(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn known_count(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub questions: Vec<Question>,
    pub vocab: Vocabulary,
    pub respondents: RespondentIndex,
}

/// Maps a filtered string corpus through the vocabulary into token ids.
pub fn index(raw: &RawCorpus, vocab: Vocabulary) -> Corpus {
    let respondents = RespondentIndex::build(raw);
    let questions = raw
        .questions
        .iter()
        .map(|q| Question {
            question_id: q.question_id.clone(),
            tokens: q.tokens.iter().map(|t| vocab.index_of(t)).collect(),
            timestamp: q.timestamp,
            answers: q
                .answers
                .iter()
                .map(|a| Answer {
                    answer_id: a.answer_id.clone(),
                    tokens: a.tokens.iter().map(|t| vocab.index_of(t)).collect(),
                    respondent_id: a.respondent_id.clone(),
                    votes: a.votes,
                    timestamp: a.timestamp,
                })
                .collect(),
        })
        .collect();
    Corpus {
        questions,
        vocab,
        respondents,
    }
}

/// Filter + vocabulary + indexing in one step. Also returns the filtered
/// string corpus so callers can persist it verbatim.
pub fn prepare(
    raw: RawCorpus,
    config: &FilterConfig,
) -> Result<(Corpus, RawCorpus, FilterReport), CorpusError> {
    let (filtered, report) = filter(raw, config);
    if filtered.questions.is_empty() {
        return Err(CorpusError::EmptyAfterFilter);
    }
    let vocab = Vocabulary::build(&filtered, config.min_word_freq);
    Ok((index(&filtered, vocab), filtered, report))
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitName::Train),
            "val" => Some(SplitName::Val),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

/// Disjoint question-index sets covering the whole corpus, roughly 8:1:1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn of(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Seeded shuffle, then 80% train / 10% validation / remainder test
/// (sizes floor, test takes the leftovers). Questions stay whole.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<DatasetSplit, CorpusError> {
    let n = corpus.questions.len();
    if n < 10 {
        return Err(CorpusError::TooFewQuestions { have: n, need: 10 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let val_end = n_train + n_val;
    Ok(DatasetSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..val_end].to_vec(),
        test: order[val_end..].to_vec(),
    })
}

/// Table-style corpus statistics: question, answer, respondent, and
/// vocabulary counts plus the mean answer length.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub questions: usize,
    pub answers: usize,
    pub respondents: usize,
    pub vocab: usize,
    pub avg_answer_len: f64,
}

impl CorpusStats {
    pub fn of(corpus: &Corpus) -> Self {
        let answers: usize = corpus.questions.iter().map(|q| q.answers.len()).sum();
        let token_total: usize = corpus
            .questions
            .iter()
            .flat_map(|q| q.answers.iter())
            .map(|a| a.tokens.len())
            .sum();
        Self {
            questions: corpus.questions.len(),
            answers,
            respondents: corpus.respondents.known_count(),
            vocab: corpus.vocab.word_count(),
            avg_answer_len: if answers == 0 {
                0.0
            } else {
                token_total as f64 / answers as f64
            },
        }
    }
}
