//! Canonical document form shared by every source family.
//!
//! Prose is Markdown, equations are LaTeX inside `$`/`$$`, tables are plain
//! text. [`parse_mmd`] reads OCR MultiMarkdown, [`convert_latex_source`] reads
//! LaTeX, and [`render_canonical`] writes the canonical text that
//! [`parse_mmd`] reads back block for block.

mod delimiters;
mod latex;
mod mmd;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delimiters::{normalize_equation_delimiters, UnbalancedDelimiters};
pub use latex::{convert_latex_source, convert_latex_str};
pub use mmd::{parse_mmd, parse_mmd_str};
pub use table::flatten_table;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("input is not valid UTF-8 (valid up to byte {valid_up_to})")]
    Encoding { valid_up_to: usize },
}

pub(crate) fn decode(raw: &[u8]) -> Result<&str, NormalizeError> {
    std::str::from_utf8(raw).map_err(|e| NormalizeError::Encoding {
        valid_up_to: e.valid_up_to(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Heading,
    Paragraph,
    EquationInlineSpan,
    EquationDisplay,
    Table,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    /// 1–6 for headings, 0 otherwise.
    pub level: u8,
    pub text: String,
}

impl Block {
    pub fn heading(level: u8, text: impl Into<String>) -> Self {
        assert!((1..=6).contains(&level), "heading level {level} out of range");
        Self {
            kind: BlockKind::Heading,
            level,
            text: text.into(),
        }
    }

    pub fn paragraph(text: impl Into<String>) -> Self {
        Self::of(BlockKind::Paragraph, text)
    }

    pub fn inline_equation(text: impl Into<String>) -> Self {
        Self::of(BlockKind::EquationInlineSpan, text)
    }

    pub fn display_equation(text: impl Into<String>) -> Self {
        Self::of(BlockKind::EquationDisplay, text)
    }

    pub fn table(text: impl Into<String>) -> Self {
        Self::of(BlockKind::Table, text)
    }

    pub fn other(text: impl Into<String>) -> Self {
        Self::of(BlockKind::Other, text)
    }

    fn of(kind: BlockKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            level: 0,
            text: text.into(),
        }
    }

    pub fn is_heading(&self) -> bool {
        self.kind == BlockKind::Heading
    }

    /// Canonical text of this block alone.
    pub fn render(&self) -> String {
        match self.kind {
            BlockKind::Heading if self.text.is_empty() => "#".repeat(self.level as usize),
            BlockKind::Heading => format!("{} {}", "#".repeat(self.level as usize), self.text),
            BlockKind::Paragraph | BlockKind::Other => self.text.clone(),
            BlockKind::EquationInlineSpan => format!("${}$", self.text),
            BlockKind::EquationDisplay => format!("$$\n{}\n$$", self.text),
            BlockKind::Table if self.text.is_empty() => "```table\n```".to_string(),
            BlockKind::Table => format!("```table\n{}\n```", self.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalDoc {
    pub source_id: String,
    pub title: Option<String>,
    pub blocks: Vec<Block>,
}

impl CanonicalDoc {
    pub fn new(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            title: None,
            blocks: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// A non-fatal problem found while normalizing, located by byte offset into
/// the (line-ending normalized) input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub source_id: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub doc: CanonicalDoc,
    pub warnings: Vec<Warning>,
}

/// Title line (MultiMarkdown metadata) followed by blocks separated by one
/// blank line. No trailing newline.
pub fn render_canonical(doc: &CanonicalDoc) -> String {
    render_blocks(doc.title.as_deref(), &doc.blocks)
}

pub(crate) fn render_blocks(title: Option<&str>, blocks: &[Block]) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(blocks.len() + 1);
    if let Some(t) = title {
        parts.push(format!("Title: {t}"));
    }
    parts.extend(blocks.iter().map(Block::render));
    parts.join("\n\n")
}
