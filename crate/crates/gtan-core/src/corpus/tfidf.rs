//! TF-IDF statistics: length-normalized term frequency with a smoothed
//! log inverse document frequency fit from training documents only.
//!
//! A document is one question text or one answer text. For token `t` in
//! document `d`: `tf = count(t, d) / |d|`, `idf = ln((1 + N) / (1 + df)) + 1`
//! with `N` the number of training documents, and the weight is `tf * idf`.

use super::{Corpus, DatasetSplit, TokenId};

#[derive(Debug, Clone)]
pub struct TfidfIndex {
    idf: Vec<f64>,
    train_docs: usize,
}

impl TfidfIndex {
    /// Fits document frequencies on the training split of `corpus`.
    pub fn from_train(corpus: &Corpus, split: &DatasetSplit) -> Self {
        Self::from_questions(corpus, &split.train)
    }

    /// Fits on every question; useful for single-corpus tooling and tests.
    pub fn from_all(corpus: &Corpus) -> Self {
        let all: Vec<usize> = (0..corpus.questions.len()).collect();
        Self::from_questions(corpus, &all)
    }

    fn from_questions(corpus: &Corpus, question_indices: &[usize]) -> Self {
        let mut df = vec![0u64; corpus.vocab.len()];
        let mut train_docs = 0usize;
        let mut seen = vec![false; corpus.vocab.len()];
        for &qi in question_indices {
            let q = &corpus.questions[qi];
            let texts = std::iter::once(&q.tokens).chain(q.answers.iter().map(|a| &a.tokens));
            for tokens in texts {
                train_docs += 1;
                for &t in tokens {
                    if !seen[t] {
                        seen[t] = true;
                        df[t] += 1;
                    }
                }
                for &t in tokens {
                    seen[t] = false;
                }
            }
        }
        let n = train_docs as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Self { idf, train_docs }
    }

    pub fn from_idf(idf: Vec<f64>, train_docs: usize) -> Self {
        Self { idf, train_docs }
    }

    pub fn train_docs(&self) -> usize {
        self.train_docs
    }

    pub fn idf(&self, t: TokenId) -> f64 {
        self.idf[t]
    }

    pub fn idf_table(&self) -> &[f64] {
        &self.idf
    }

    /// TF-IDF weights of a document's distinct tokens, in first-occurrence
    /// order. Weights are strictly positive for every present token.
    pub fn weights(&self, tokens: &[TokenId]) -> Vec<(TokenId, f64)> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let mut order: Vec<TokenId> = Vec::new();
        let mut counts: std::collections::HashMap<TokenId, usize> =
            std::collections::HashMap::new();
        for &t in tokens {
            let e = counts.entry(t).or_insert(0);
            if *e == 0 {
                order.push(t);
            }
            *e += 1;
        }
        let len = tokens.len() as f64;
        order
            .into_iter()
            .map(|t| (t, counts[&t] as f64 / len * self.idf[t]))
            .collect()
    }
}
