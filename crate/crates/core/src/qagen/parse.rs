//! Response grammar (version 1, see `docs/qa-format.md`).
//!
//! ```text
//! item     = number ("." | ")") ws question-part
//! question-part = ["Q:" | "Question:"] text-ending-in-"?" [ws answer-mark text]
//! answer   = answer-mark text { continuation-line }   (when not inline)
//! answer-mark = "A:" | "Answer:"
//! ```
//!
//! Lines before the first item are ignored. A non-inline answer is the next
//! non-blank line and must start with an answer mark; it continues over
//! following lines until a blank line or the next item.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const GRAMMAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyQuestion,
    MissingQuestionMark,
    MissingAnswer,
    EmptyAnswer,
}

impl ViolationKind {
    pub fn code(self) -> &'static str {
        match self {
            ViolationKind::EmptyQuestion => "empty_question",
            ViolationKind::MissingQuestionMark => "missing_question_mark",
            ViolationKind::MissingAnswer => "missing_answer",
            ViolationKind::EmptyAnswer => "empty_answer",
        }
    }
}

/// A rejected item, identified by the number it was written with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub item: u32,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (item {})", self.kind.code(), self.item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseResult {
    Accepted {
        pairs: Vec<RawPair>,
        dropped: Vec<Violation>,
    },
    Discard(String),
}

impl ParseResult {
    pub fn pairs(&self) -> &[RawPair] {
        match self {
            ParseResult::Accepted { pairs, .. } => pairs,
            ParseResult::Discard(_) => &[],
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, ParseResult::Accepted { .. })
    }
}

pub const NO_PAIRS_FOUND: &str = "no_pairs_found";

pub fn parse_qa_response(raw: &str) -> ParseResult {
    let lines: Vec<&str> = raw.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some((number, rest)) = item_start(lines[i]) else {
            i += 1;
            continue;
        };
        i += 1;
        let rest = strip_mark(rest, &["Q:", "Question:"]).unwrap_or(rest).trim();
        let (question, inline_answer) = split_inline(rest);
        let answer = match inline_answer {
            Some(a) => {
                let (cont, next) = continuation(&lines, i);
                i = next;
                Some(join_answer(a, &cont))
            }
            None => {
                let mut j = i;
                while j < lines.len() && lines[j].trim().is_empty() {
                    j += 1;
                }
                match lines.get(j).and_then(|l| strip_mark(l.trim(), &["A:", "Answer:"])) {
                    Some(a) if item_start(lines[j]).is_none() => {
                        let (cont, next) = continuation(&lines, j + 1);
                        i = next;
                        Some(join_answer(a, &cont))
                    }
                    _ => None,
                }
            }
        };
        match check(question, answer) {
            Ok(pair) => pairs.push(pair),
            Err(kind) => dropped.push(Violation { item: number, kind }),
        }
    }
    if pairs.is_empty() {
        return ParseResult::Discard(match dropped.first() {
            Some(v) => v.to_string(),
            None => NO_PAIRS_FOUND.to_string(),
        });
    }
    ParseResult::Accepted { pairs, dropped }
}

/// Numbered lines ending in `?`, for the question pass of two-pass mode.
pub fn parse_questions(raw: &str) -> Vec<String> {
    raw.lines()
        .filter_map(item_start)
        .map(|(_, rest)| strip_mark(rest, &["Q:", "Question:"]).unwrap_or(rest).trim())
        .filter(|q| q.ends_with('?') && q.len() > 1)
        .map(str::to_string)
        .collect()
}

fn check(question: &str, answer: Option<String>) -> Result<RawPair, ViolationKind> {
    let question = question.trim();
    if question.trim_end_matches('?').trim().is_empty() {
        return Err(ViolationKind::EmptyQuestion);
    }
    if !question.ends_with('?') {
        return Err(ViolationKind::MissingQuestionMark);
    }
    let answer = answer.ok_or(ViolationKind::MissingAnswer)?;
    if answer.trim().is_empty() {
        return Err(ViolationKind::EmptyAnswer);
    }
    Ok(RawPair {
        question: question.to_string(),
        answer: answer.trim().to_string(),
    })
}

/// `N.` or `N)` followed by whitespace; returns the number and the remainder.
fn item_start(line: &str) -> Option<(u32, &str)> {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 4 {
        return None;
    }
    let after = &t[digits..];
    let rest = after.strip_prefix('.').or_else(|| after.strip_prefix(')'))?;
    if !rest.starts_with(|c: char| c.is_whitespace()) {
        return None;
    }
    Some((t[..digits].parse().ok()?, rest.trim_start()))
}

fn strip_mark<'a>(s: &'a str, marks: &[&str]) -> Option<&'a str> {
    marks.iter().find_map(|m| s.strip_prefix(m))
}

/// Splits `question? A: answer` at the first `?` followed by an answer mark.
fn split_inline(rest: &str) -> (&str, Option<&str>) {
    for (p, _) in rest.match_indices('?') {
        let after = &rest[p + 1..];
        let trimmed = after.trim_start();
        if trimmed.len() == after.len() {
            continue;
        }
        if let Some(a) = strip_mark(trimmed, &["A:", "Answer:"]) {
            return (&rest[..=p], Some(a));
        }
    }
    (rest, None)
}

fn continuation<'a>(lines: &[&'a str], from: usize) -> (Vec<&'a str>, usize) {
    let mut out = Vec::new();
    let mut i = from;
    while i < lines.len() && !lines[i].trim().is_empty() && item_start(lines[i]).is_none() {
        out.push(lines[i].trim());
        i += 1;
    }
    (out, i)
}

fn join_answer(first: &str, cont: &[&str]) -> String {
    let mut parts = vec![first.trim()];
    parts.extend(cont.iter().copied());
    parts.retain(|p| !p.is_empty());
    parts.join(" ")
}
