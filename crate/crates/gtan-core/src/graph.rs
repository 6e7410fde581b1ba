//! Per-question heterogeneous text graph.
//!
//! One graph per question: node 0 is the question, nodes `1..=n` its answers
//! in input order, then one node per distinct word in first-occurrence order
//! (question text first, then each answer). Question-word and answer-word
//! edges carry TF-IDF weights; every node has an implicit unit self-loop.
//! Word nodes bridge answers, so correlated answers become 2-hop neighbors.

use crate::corpus::{Question, TfidfIndex, TokenId, Vocabulary};
use crate::tensor::Tensor;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeType {
    Question,
    Answer,
    Word,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Question => "question",
            NodeType::Answer => "answer",
            NodeType::Word => "word",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    RowL1,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::RowL1 => "row_l1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Normalization::None),
            "row_l1" => Some(Normalization::RowL1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionGraph {
    pub question_id: String,
    pub answer_ids: Vec<String>,
    /// Distinct word tokens in node order; word `i` is node
    /// `1 + answer_count + i`.
    pub word_tokens: Vec<TokenId>,
    /// Off-diagonal adjacency as per-node neighbor lists. Self-loops are
    /// implicit with weight 1.
    pub edges: Vec<Vec<(usize, f64)>>,
    /// Word-node index for every question token position.
    pub question_positions: Vec<usize>,
    /// Word-node index for every token position of each answer.
    pub answer_positions: Vec<Vec<usize>>,
}

impl QuestionGraph {
    pub fn node_count(&self) -> usize {
        1 + self.answer_ids.len() + self.word_tokens.len()
    }

    pub fn answer_count(&self) -> usize {
        self.answer_ids.len()
    }

    pub fn answer_node(&self, i: usize) -> usize {
        1 + i
    }

    pub fn word_nodes(&self) -> std::ops::Range<usize> {
        1 + self.answer_ids.len()..self.node_count()
    }

    pub fn node_type(&self, node: usize) -> NodeType {
        if node == 0 {
            NodeType::Question
        } else if node <= self.answer_ids.len() {
            NodeType::Answer
        } else {
            NodeType::Word
        }
    }

    /// Dense adjacency with the unit diagonal, ready for aggregation.
    pub fn dense_adjacency(&self) -> Tensor {
        let n = self.node_count();
        let mut a = Tensor::zeros(n, n);
        for i in 0..n {
            a.set(i, i, 1.0);
            for &(j, w) in &self.edges[i] {
                a.set(i, j, w);
            }
        }
        a
    }

    /// Drops the question node's edges (both directions), leaving it with
    /// only its self-loop. Used when discarding all question information.
    pub fn strip_question_edges(&mut self) {
        self.edges[0].clear();
        for list in self.edges.iter_mut().skip(1) {
            list.retain(|&(j, _)| j != 0);
        }
    }

    /// Text edge list, one line per stored directed entry:
    /// `src_type:src_id dst_type:dst_id weight`.
    pub fn edge_list_dump(&self, vocab: &Vocabulary) -> String {
        let name = |node: usize| -> String {
            match self.node_type(node) {
                NodeType::Question => format!("question:{}", self.question_id),
                NodeType::Answer => format!("answer:{}", self.answer_ids[node - 1]),
                NodeType::Word => {
                    let w = self.word_tokens[node - 1 - self.answer_ids.len()];
                    format!("word:{}", vocab.token(w))
                }
            }
        };
        let mut out = String::new();
        for (i, list) in self.edges.iter().enumerate() {
            for &(j, w) in list {
                out.push_str(&format!("{} {} {w}\n", name(i), name(j)));
            }
        }
        out
    }
}

/// Builds the question's graph from its filtered text and TF-IDF weights.
///
/// Node ordering is deterministic: question, answers in input order, words
/// by first occurrence. Each distinct word of a text contributes one edge
/// weighted by its TF-IDF in that text.
pub fn build_graph(question: &Question, tfidf: &TfidfIndex) -> QuestionGraph {
    let n_answers = question.answers.len();
    let mut word_node_of: HashMap<TokenId, usize> = HashMap::new();
    let mut word_tokens: Vec<TokenId> = Vec::new();

    let mut intern = |t: TokenId, word_tokens: &mut Vec<TokenId>| -> usize {
        *word_node_of.entry(t).or_insert_with(|| {
            word_tokens.push(t);
            n_answers + word_tokens.len()
        })
    };

    let question_positions: Vec<usize> = question
        .tokens
        .iter()
        .map(|&t| intern(t, &mut word_tokens))
        .collect();
    let answer_positions: Vec<Vec<usize>> = question
        .answers
        .iter()
        .map(|a| {
            a.tokens
                .iter()
                .map(|&t| intern(t, &mut word_tokens))
                .collect()
        })
        .collect();

    let node_count = 1 + n_answers + word_tokens.len();
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_count];
    let connect = |text_node: usize, tokens: &[TokenId], edges: &mut Vec<Vec<(usize, f64)>>| {
        for (t, w) in tfidf.weights(tokens) {
            let word_node = word_node_of[&t];
            edges[text_node].push((word_node, w));
            edges[word_node].push((text_node, w));
        }
    };

    connect(0, &question.tokens, &mut edges);
    for (i, a) in question.answers.iter().enumerate() {
        connect(1 + i, &a.tokens, &mut edges);
    }

    QuestionGraph {
        question_id: question.question_id.clone(),
        answer_ids: question
            .answers
            .iter()
            .map(|a| a.answer_id.clone())
            .collect(),
        word_tokens,
        edges,
        question_positions,
        answer_positions,
    }
}

/// Applies the configured adjacency normalization.
///
/// `None` leaves TF-IDF weights raw. `RowL1` divides each row's off-diagonal
/// entries by their row sum (self-loops stay at 1); the result is read as
/// directed row-to-column aggregation weights and is no longer symmetric.
pub fn normalize_adjacency(mut graph: QuestionGraph, mode: Normalization) -> QuestionGraph {
    match mode {
        Normalization::None => graph,
        Normalization::RowL1 => {
            for list in &mut graph.edges {
                let sum: f64 = list.iter().map(|&(_, w)| w).sum();
                if sum > 0.0 {
                    for (_, w) in list.iter_mut() {
                        *w /= sum;
                    }
                }
            }
            graph
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{self, RawAnswer, RawCorpus, RawQuestion, Vocabulary};

    /// A corpus of one question built straight from token strings, keeping
    /// every word in the vocabulary.
    fn toy(question_tokens: &[&str], answers: &[&[&str]]) -> corpus::Corpus {
        let raw = RawCorpus {
            questions: vec![RawQuestion {
                question_id: "q".into(),
                tokens: question_tokens.iter().map(|s| s.to_string()).collect(),
                timestamp: None,
                answers: answers
                    .iter()
                    .enumerate()
                    .map(|(i, toks)| RawAnswer {
                        answer_id: format!("a{i}"),
                        tokens: toks.iter().map(|s| s.to_string()).collect(),
                        respondent_id: format!("r{i}"),
                        votes: (answers.len() - i) as u64,
                        timestamp: None,
                    })
                    .collect(),
            }],
        };
        let vocab = Vocabulary::build(&raw, 1);
        corpus::index(&raw, vocab)
    }

    fn build_toy(question_tokens: &[&str], answers: &[&[&str]]) -> (corpus::Corpus, QuestionGraph) {
        let c = toy(question_tokens, answers);
        let tfidf = TfidfIndex::from_all(&c);
        let g = build_graph(&c.questions[0], &tfidf);
        (c, g)
    }

    #[test]
    fn five_node_toy_structure() {
        let (c, g) = build_toy(&["a", "b"], &[&["b", "c"]]);
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.answer_count(), 1);
        assert_eq!(g.word_tokens.len(), 3);

        // Word b is connected to both the question and the answer.
        let b = c.vocab.index_of("b");
        let b_node = g.word_nodes().find(|&n| g.word_tokens[n - 2] == b).unwrap();
        assert_eq!(g.edges[b_node].len(), 2);
        let neighbors: Vec<usize> = g.edges[b_node].iter().map(|&(j, _)| j).collect();
        assert!(neighbors.contains(&0) && neighbors.contains(&1));
    }

    #[test]
    fn shared_words_create_two_hop_answer_paths() {
        // Disjoint answers: no answer-answer path through a word.
        let (_, g) = build_toy(&["q1"], &[&["x", "y"], &["u", "v"]]);
        assert!(!two_hop_connected(&g, 1, 2));

        // One shared word bridges them.
        let (_, g) = build_toy(&["q1"], &[&["x", "y"], &["y", "v"]]);
        assert!(two_hop_connected(&g, 1, 2));
    }

    fn two_hop_connected(g: &QuestionGraph, a: usize, b: usize) -> bool {
        g.edges[a]
            .iter()
            .any(|&(w, _)| g.edges[w].iter().any(|&(j, _)| j == b))
    }

    #[test]
    fn weights_match_hand_computed_tfidf() {
        // Documents: question [a, b], answers [b, c] and [a, a, d].
        let (c, g) = build_toy(&["a", "b"], &[&["b", "c"], &["a", "a", "d"]]);
        let idf = |df: f64| (4.0f64 / (1.0 + df)).ln() + 1.0;

        // Answer 1 is node 2; its edge to word "a" carries tf 2/3, df(a)=2.
        let a_tok = c.vocab.index_of("a");
        let (_, w) = g.edges[2]
            .iter()
            .map(|&(j, w)| (g.word_tokens[j - 3], w))
            .find(|&(t, _)| t == a_tok)
            .unwrap();
        assert!((w - 2.0 / 3.0 * idf(2.0)).abs() < 1e-15);

        // Question edge to "b": tf 1/2, df(b)=2.
        let b_tok = c.vocab.index_of("b");
        let (_, w) = g.edges[0]
            .iter()
            .map(|&(j, w)| (g.word_tokens[j - 3], w))
            .find(|&(t, _)| t == b_tok)
            .unwrap();
        assert!((w - 0.5 * idf(2.0)).abs() < 1e-15);
    }

    #[test]
    fn rebuild_is_identical_and_symmetric() {
        let (c, g) = build_toy(&["a", "b", "a"], &[&["b", "c", "c"], &["d", "a"]]);
        let tfidf = TfidfIndex::from_all(&c);
        let again = build_graph(&c.questions[0], &tfidf);
        assert_eq!(g, again);

        let dense = g.dense_adjacency();
        for i in 0..g.node_count() {
            assert_eq!(dense.get(i, i), 1.0);
            for j in 0..g.node_count() {
                assert_eq!(dense.get(i, j), dense.get(j, i));
            }
        }
    }

    #[test]
    fn bipartite_edge_pattern() {
        let (_, g) = build_toy(&["a", "b"], &[&["b", "c"], &["c", "d", "a"]]);
        for node in 0..g.node_count() {
            for &(j, w) in &g.edges[node] {
                assert!(w > 0.0);
                match g.node_type(node) {
                    NodeType::Question | NodeType::Answer => {
                        assert_eq!(g.node_type(j), NodeType::Word)
                    }
                    NodeType::Word => assert_ne!(g.node_type(j), NodeType::Word),
                }
            }
        }
    }

    #[test]
    fn question_only_words_become_nodes() {
        let (c, g) = build_toy(&["lonely", "b"], &[&["b", "c"]]);
        let lonely = c.vocab.index_of("lonely");
        assert!(g.word_tokens.contains(&lonely));
    }

    #[test]
    fn row_l1_normalization() {
        let (_, g) = build_toy(&["a", "b"], &[&["a", "b"]]);
        let unchanged = normalize_adjacency(g.clone(), Normalization::None);
        assert_eq!(unchanged, g);

        let norm = normalize_adjacency(g, Normalization::RowL1);
        for list in &norm.edges {
            if list.is_empty() {
                continue;
            }
            let sum: f64 = list.iter().map(|&(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Equal off-diagonal weights become equal shares.
        let q_row = &norm.edges[0];
        assert_eq!(q_row.len(), 2);
        assert!((q_row[0].1 - 0.5).abs() < 1e-12);
        assert!((q_row[1].1 - 0.5).abs() < 1e-12);

        // Diagonal untouched.
        let dense = norm.dense_adjacency();
        for i in 0..norm.node_count() {
            assert_eq!(dense.get(i, i), 1.0);
        }
    }

    #[test]
    fn row_l1_leaves_isolated_nodes_alone() {
        let (_, mut g) = build_toy(&["a", "b"], &[&["b", "c"]]);
        g.strip_question_edges();
        let norm = normalize_adjacency(g, Normalization::RowL1);
        assert!(norm.edges[0].is_empty());
        assert_eq!(norm.dense_adjacency().get(0, 0), 1.0);
    }

    #[test]
    fn strip_question_edges_isolates_question_node() {
        let (_, mut g) = build_toy(&["a", "b"], &[&["b", "c"]]);
        g.strip_question_edges();
        assert!(g.edges[0].is_empty());
        for list in &g.edges {
            assert!(list.iter().all(|&(j, _)| j != 0));
        }
    }

    #[test]
    fn edge_dump_format() {
        let (c, g) = build_toy(&["a"], &[&["a", "b"]]);
        let dump = g.edge_list_dump(&c.vocab);
        assert!(dump.contains("question:q word:a"));
        assert!(dump.contains("answer:a0 word:b"));
        for line in dump.lines() {
            let fields: Vec<&str> = line.split(' ').collect();
            assert_eq!(fields.len(), 3);
            assert!(fields[2].parse::<f64>().unwrap() > 0.0);
        }
    }
}
