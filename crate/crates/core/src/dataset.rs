//! Text-prediction and question-answer datasets, keyword subsets and counts.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{chunk_document, ChunkError};
use crate::normalize::{render_canonical, CanonicalDoc};
use crate::qagen::QAPair;
use crate::Corpus;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("pair from chunk {chunk_id} refers to unknown source {source_id}")]
    UnknownSource { source_id: String, chunk_id: String },
    #[error(transparent)]
    Chunk(#[from] ChunkError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsupervisedRecord {
    pub text: String,
    pub source_id: String,
    pub corpus: Corpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisedRecord {
    pub question: String,
    pub answer: String,
    pub source_id: String,
    pub chunk_id: String,
    pub corpus: Corpus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: u64,
    pub per_corpus_unsupervised: BTreeMap<Corpus, u64>,
    pub per_corpus_supervised: BTreeMap<Corpus, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TpOutput {
    pub records: Vec<UnsupervisedRecord>,
    /// Source ids of documents without content.
    pub skipped: Vec<String>,
}

/// Whole documents for arxiv and jacow, one record per section chunk for books.
pub fn emit_tp(docs: &[(Corpus, CanonicalDoc)], max_tokens: usize) -> Result<TpOutput, DatasetError> {
    let mut out = TpOutput::default();
    for (corpus, doc) in docs {
        if doc.is_empty() {
            log::warn!(target: "assemble", "{}: empty document skipped", doc.source_id);
            out.skipped.push(doc.source_id.clone());
            continue;
        }
        let texts = match corpus {
            Corpus::Books => chunk_document(doc, *corpus, max_tokens)?
                .iter()
                .map(|c| c.with_headings())
                .collect(),
            Corpus::Arxiv | Corpus::Jacow => vec![render_canonical(doc)],
        };
        out.records.extend(
            texts
                .into_iter()
                .filter(|t| !t.trim().is_empty())
                .map(|text| UnsupervisedRecord {
                    text,
                    source_id: doc.source_id.clone(),
                    corpus: *corpus,
                }),
        );
    }
    Ok(out)
}

/// One record per pair; a repeated (question, answer) keeps its first occurrence.
pub fn emit_tqa(pairs: &[QAPair], corpus_of: &HashMap<String, Corpus>) -> Result<Vec<SupervisedRecord>, DatasetError> {
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        if !seen.insert((&p.question, &p.answer)) {
            continue;
        }
        let corpus = *corpus_of.get(&p.source_id).ok_or_else(|| DatasetError::UnknownSource {
            source_id: p.source_id.clone(),
            chunk_id: p.chunk_id.clone(),
        })?;
        out.push(SupervisedRecord {
            question: p.question.clone(),
            answer: p.answer.clone(),
            source_id: p.source_id.clone(),
            chunk_id: p.chunk_id.clone(),
            corpus,
        });
    }
    Ok(out)
}

/// Dedup on already-emitted records, used to check idempotence.
pub fn dedup_records(records: &[SupervisedRecord]) -> Vec<SupervisedRecord> {
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert((&r.question, &r.answer)))
        .cloned()
        .collect()
}

/// Chunk text by chunk id, consulted when filtering supervised records.
pub type ChunkTexts = HashMap<String, String>;

pub trait KeywordSearch {
    fn contains_keyword(&self, keyword: &str, chunks: &ChunkTexts) -> bool;
}

impl KeywordSearch for UnsupervisedRecord {
    fn contains_keyword(&self, keyword: &str, _: &ChunkTexts) -> bool {
        self.text.contains(keyword)
    }
}

impl KeywordSearch for SupervisedRecord {
    fn contains_keyword(&self, keyword: &str, chunks: &ChunkTexts) -> bool {
        self.question.contains(keyword)
            || self.answer.contains(keyword)
            || chunks.get(&self.chunk_id).is_some_and(|t| t.contains(keyword))
    }
}

/// Case-sensitive substring selection, order preserved.
pub fn filter_by_keyword<T: KeywordSearch + Clone>(
    records: &[T],
    keyword: &str,
    chunks: &ChunkTexts,
) -> Result<Vec<T>, DatasetError> {
    if keyword.is_empty() {
        return Err(DatasetError::EmptyKeyword);
    }
    Ok(records
        .iter()
        .filter(|r| r.contains_keyword(keyword, chunks))
        .cloned()
        .collect())
}

pub fn compute_stats(tp_counts: &BTreeMap<Corpus, u64>, tqa_counts: &BTreeMap<Corpus, u64>) -> DatasetStats {
    DatasetStats {
        total: tp_counts.values().chain(tqa_counts.values()).sum(),
        per_corpus_unsupervised: tp_counts.clone(),
        per_corpus_supervised: tqa_counts.clone(),
    }
}

pub fn count_by_corpus<T>(records: &[T], corpus: impl Fn(&T) -> Corpus) -> BTreeMap<Corpus, u64> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(corpus(r)).or_insert(0) += 1;
    }
    counts
}
