//! Line-delimited JSON corpus records and the plain-text stats table.
//!
//! One question per line:
//! `{"question_id": "...", "text": "...", "timestamp": 123,
//!   "answers": [{"answer_id": "...", "text": "...", "respondent_id": "...",
//!                "votes": 7, "timestamp": 456}]}`
//! Timestamps (minutes) are optional.

use super::{tokenize, CorpusError, CorpusStats, RawAnswer, RawCorpus, RawQuestion};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer_id: String,
    pub text: String,
    pub respondent_id: String,
    pub votes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    pub answers: Vec<AnswerRecord>,
}

impl From<QuestionRecord> for RawQuestion {
    fn from(r: QuestionRecord) -> Self {
        RawQuestion {
            question_id: r.question_id,
            tokens: tokenize(&r.text),
            timestamp: r.timestamp,
            answers: r
                .answers
                .into_iter()
                .map(|a| RawAnswer {
                    answer_id: a.answer_id,
                    tokens: tokenize(&a.text),
                    respondent_id: a.respondent_id,
                    votes: a.votes,
                    timestamp: a.timestamp,
                })
                .collect(),
        }
    }
}

/// Parses one corpus line; `line_no` is 1-based and only used for errors.
pub fn parse_corpus_line(line: &str, line_no: usize) -> Result<RawQuestion, CorpusError> {
    let record: QuestionRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(record.into())
}

pub fn read_corpus_file(path: &Path) -> Result<RawCorpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut questions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        questions.push(parse_corpus_line(&line, i + 1)?);
    }
    Ok(RawCorpus { questions })
}

/// Serializable records for a string corpus, tokens re-joined with spaces.
pub fn to_records(raw: &RawCorpus) -> Vec<QuestionRecord> {
    raw.questions
        .iter()
        .map(|q| QuestionRecord {
            question_id: q.question_id.clone(),
            text: q.tokens.join(" "),
            timestamp: q.timestamp,
            answers: q
                .answers
                .iter()
                .map(|a| AnswerRecord {
                    answer_id: a.answer_id.clone(),
                    text: a.tokens.join(" "),
                    respondent_id: a.respondent_id.clone(),
                    votes: a.votes,
                    timestamp: a.timestamp,
                })
                .collect(),
        })
        .collect()
}

pub fn write_corpus_file(raw: &RawCorpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = std::fs::File::create(path)?;
    for record in to_records(raw) {
        let line = serde_json::to_string(&record).expect("corpus records serialize");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Renders the statistics table (`#Que.`, `#Ans.`, `#Resp.`, `Vocab.`,
/// `Avg. Len.`).
pub fn render_stats(name: &str, stats: &CorpusStats) -> String {
    let mut s = String::new();
    s.push_str("Dataset      #Que.    #Ans.    #Resp.   Vocab.   Avg. Len.\n");
    s.push_str(&format!(
        "{:<12} {:<8} {:<8} {:<8} {:<8} {:.1}\n",
        name, stats.questions, stats.answers, stats.respondents, stats.vocab, stats.avg_answer_len
    ));
    s
}
