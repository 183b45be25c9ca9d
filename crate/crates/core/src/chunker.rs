//! Splits canonical documents into training units along the heading tree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{render_blocks, Block, CanonicalDoc};
use crate::Corpus;

pub const DEFAULT_MAX_TOKENS: usize = 12_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("document {source_id} has no blocks")]
    EmptyDocument { source_id: String },
    #[error("max_tokens must be positive")]
    ZeroBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_id: String,
    pub ordinal: usize,
    pub heading_path: Vec<String>,
    pub text: String,
    pub est_tokens: usize,
    /// Set when the chunk is one block that alone exceeds the budget.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

impl Chunk {
    /// Heading path as Markdown headings, a blank line, then the text.
    pub fn with_headings(&self) -> String {
        let headings: Vec<String> = self
            .heading_path
            .iter()
            .enumerate()
            .map(|(depth, h)| format!("{} {h}", "#".repeat((depth + 1).min(6))))
            .collect();
        match (headings.is_empty(), self.text.is_empty()) {
            (true, _) => self.text.clone(),
            (false, true) => headings.join("\n"),
            (false, false) => format!("{}\n\n{}", headings.join("\n"), self.text),
        }
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// One chunk per top-level section; sections over budget recurse into their
/// subsections, and heading-free runs over budget are packed at block
/// boundaries. Headings that open a chunk go to `heading_path`, not `text`.
pub fn split_sections(doc: &CanonicalDoc, max_tokens: usize) -> Result<Vec<Chunk>, ChunkError> {
    check(doc, max_tokens)?;
    let mut splitter = Splitter::new(doc, max_tokens);
    splitter.node(&[], &doc.blocks, true);
    Ok(splitter.chunks)
}

/// Book chapters are split by section; papers become a single chunk unless
/// they exceed the budget.
pub fn chunk_document(doc: &CanonicalDoc, corpus: Corpus, max_tokens: usize) -> Result<Vec<Chunk>, ChunkError> {
    check(doc, max_tokens)?;
    let mut splitter = Splitter::new(doc, max_tokens);
    splitter.node(&[], &doc.blocks, corpus == Corpus::Books);
    Ok(splitter.chunks)
}

fn check(doc: &CanonicalDoc, max_tokens: usize) -> Result<(), ChunkError> {
    if max_tokens == 0 {
        return Err(ChunkError::ZeroBudget);
    }
    if doc.blocks.is_empty() {
        return Err(ChunkError::EmptyDocument {
            source_id: doc.source_id.clone(),
        });
    }
    Ok(())
}

struct Splitter<'a> {
    source_id: &'a str,
    max_tokens: usize,
    chunks: Vec<Chunk>,
}

impl<'a> Splitter<'a> {
    fn new(doc: &'a CanonicalDoc, max_tokens: usize) -> Self {
        Self {
            source_id: &doc.source_id,
            max_tokens,
            chunks: Vec::new(),
        }
    }

    fn node(&mut self, path: &[String], blocks: &[Block], force_split: bool) {
        if blocks.is_empty() {
            return;
        }
        let level = blocks.iter().filter(|b| b.is_heading()).map(|b| b.level).min();
        if !force_split || level.is_none() {
            let text = render_blocks(None, blocks);
            if estimate_tokens(&text) <= self.max_tokens {
                self.emit(path, text, false);
                return;
            }
        }
        let Some(level) = level else {
            self.pack(path, blocks);
            return;
        };
        let starts: Vec<usize> = blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_heading() && b.level == level)
            .map(|(i, _)| i)
            .collect();
        self.node(path, &blocks[..starts[0]], false);
        for (n, &start) in starts.iter().enumerate() {
            let end = starts.get(n + 1).copied().unwrap_or(blocks.len());
            let mut sub = path.to_vec();
            sub.push(blocks[start].text.clone());
            self.node(&sub, &blocks[start + 1..end], false);
        }
    }

    fn pack(&mut self, path: &[String], blocks: &[Block]) {
        let mut from = 0;
        while from < blocks.len() {
            let mut to = from + 1;
            let mut text = blocks[from].render();
            while to < blocks.len() {
                let longer = render_blocks(None, &blocks[from..=to]);
                if estimate_tokens(&longer) > self.max_tokens {
                    break;
                }
                text = longer;
                to += 1;
            }
            let oversized = estimate_tokens(&text) > self.max_tokens;
            self.emit(path, text, oversized);
            from = to;
        }
    }

    fn emit(&mut self, path: &[String], text: String, oversized: bool) {
        let ordinal = self.chunks.len();
        self.chunks.push(Chunk {
            chunk_id: format!("{}:{ordinal}", self.source_id),
            source_id: self.source_id.to_string(),
            ordinal,
            heading_path: path.to_vec(),
            est_tokens: estimate_tokens(&text),
            text,
            oversized,
        });
    }
}
