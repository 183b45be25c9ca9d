//! Corpus construction for domain-specific language-model assistants.
//!
//! The pipeline acquires scientific publications, normalizes OCR MultiMarkdown
//! and LaTeX sources into one canonical Markdown form, chunks documents by
//! section, prompts a chat-completion endpoint for question-answer pairs, and
//! assembles JSON Lines training sets plus a fine-tune manifest.

pub mod acquisition;
pub mod chunker;
pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod http;
pub mod jsonl;
pub mod manifest;
pub mod mock;
pub mod normalize;
pub mod qagen;

pub use corpus::Corpus;
