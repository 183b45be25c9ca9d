//! Question-answer generation over chunks through a chat-completion endpoint.

mod endpoint;
mod generate;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;

pub use endpoint::{Endpoint, EndpointConfig, DEFAULT_CONTEXT_LIMIT, DEFAULT_MODEL};
pub use generate::{
    generate_for_chunks, load_records, pairs_from_records, write_jsonl, Generation, GenerationMode, Generator,
    RecordLog,
};
pub use parse::{
    parse_qa_response, parse_questions, ParseResult, RawPair, Violation, ViolationKind, GRAMMAR_VERSION, NO_PAIRS_FOUND,
};

pub const PLACEHOLDER: &str = "$TEXT";
pub const QUESTIONS_PLACEHOLDER: &str = "$QUESTIONS";
pub const DEFAULT_TEMPLATE: &str = "Generate ten questions for a paper:\"$TEXT\"";
pub const DEFAULT_ANSWER_TEMPLATE: &str = "Answer each question using only the text below. \
Write every item as \"N. Q: <question> A: <answer>\".\n\nText:\"$TEXT\"\n\nQuestions:\n$QUESTIONS";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QaError {
    #[error("template must contain {placeholder} exactly once, found {found}")]
    Template { placeholder: &'static str, found: usize },
    #[error("network error: {0}")]
    Network(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("prompt needs about {est_tokens} tokens plus the completion budget, limit is {limit}")]
    ContextOverflow { est_tokens: usize, limit: usize },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("record log {path}: {message}")]
    Log { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, QaError> {
        let template = template.into();
        check_placeholder(&template, PLACEHOLDER)?;
        Ok(Self { template })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

/// Second-pass template holding both `$TEXT` and `$QUESTIONS` once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerTemplate {
    template: String,
}

impl AnswerTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, QaError> {
        let template = template.into();
        check_placeholder(&template, PLACEHOLDER)?;
        check_placeholder(&template, QUESTIONS_PLACEHOLDER)?;
        Ok(Self { template })
    }

    pub fn render(&self, chunk: &Chunk, questions: &[String]) -> String {
        let list: Vec<String> = questions
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect();
        substitute(
            &self.template,
            &[
                (PLACEHOLDER, &chunk.with_headings()),
                (QUESTIONS_PLACEHOLDER, &list.join("\n")),
            ],
        )
    }
}

impl Default for AnswerTemplate {
    fn default() -> Self {
        Self {
            template: DEFAULT_ANSWER_TEMPLATE.to_string(),
        }
    }
}

fn check_placeholder(template: &str, placeholder: &'static str) -> Result<(), QaError> {
    let found = template.matches(placeholder).count();
    if found != 1 {
        return Err(QaError::Template { placeholder, found });
    }
    Ok(())
}

/// Single-pass substitution so placeholder text inside values is left alone.
fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = values
            .iter()
            .filter_map(|(k, v)| rest.find(k).map(|p| (p, *k, *v)))
            .min_by_key(|(p, _, _)| *p);
        match next {
            Some((p, k, v)) => {
                out.push_str(&rest[..p]);
                out.push_str(v);
                rest = &rest[p + k.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

pub fn build_prompt(template: &PromptTemplate, chunk: &Chunk) -> String {
    substitute(&template.template, &[(PLACEHOLDER, &chunk.with_headings())])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    pub chunk_id: String,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Accepted {
        n_pairs: usize,
        dropped: Vec<Violation>,
    },
    Discarded {
        reason: String,
    },
    /// Transport or endpoint failure; retried on the next run.
    Failed {
        error: String,
    },
}

impl Outcome {
    pub fn is_final(&self) -> bool {
        !matches!(self, Outcome::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub chunk_id: String,
    pub source_id: String,
    pub raw_response: String,
    /// Question-pass response in two-pass mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_response: Option<String>,
    pub outcome: Outcome,
    pub endpoint_model: String,
    pub latency_ms: u64,
}
