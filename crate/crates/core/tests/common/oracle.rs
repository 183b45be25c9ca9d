//! Reference implementations used as test oracles. None of them call into
//! the library.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

#[derive(Clone, Copy)]
enum State {
    Text,
    TextEscape { at: usize },
    DollarOpen,
    Single,
    SingleEscape,
    Double,
    DoubleEscape,
    DoubleClosing,
    Math,
    MathEscape,
}

/// Character-level scanner for delimiter rewriting. `Err` carries the byte
/// offset of an opener that is never closed.
pub fn delimiter_oracle(input: &str) -> Result<String, usize> {
    let mut out = String::new();
    let mut state = State::Text;
    // open math span: opener offset, closing char, display flag, content, saw `$`
    let mut opener = 0usize;
    let mut close = ')';
    let mut display = false;
    let mut content = String::new();
    let mut bare_dollar = false;

    let chars: Vec<(usize, char)> = input.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        let mut advance = true;
        state = match state {
            State::Text => match c {
                '\\' => State::TextEscape { at: pos },
                '$' => State::DollarOpen,
                _ => {
                    out.push(c);
                    State::Text
                }
            },
            State::TextEscape { at } => match c {
                '(' | '[' => {
                    opener = at;
                    display = c == '[';
                    close = if display { ']' } else { ')' };
                    content.clear();
                    bare_dollar = false;
                    State::Math
                }
                _ => {
                    out.push('\\');
                    out.push(c);
                    State::Text
                }
            },
            State::DollarOpen => {
                if c == '$' {
                    out.push_str("$$");
                    State::Double
                } else {
                    out.push('$');
                    advance = false;
                    State::Single
                }
            }
            State::Single => {
                out.push(c);
                match c {
                    '\\' => State::SingleEscape,
                    '$' => State::Text,
                    _ => State::Single,
                }
            }
            State::SingleEscape => {
                out.push(c);
                State::Single
            }
            State::Double => match c {
                '\\' => {
                    out.push(c);
                    State::DoubleEscape
                }
                '$' => State::DoubleClosing,
                _ => {
                    out.push(c);
                    State::Double
                }
            },
            State::DoubleEscape => {
                out.push(c);
                State::Double
            }
            State::DoubleClosing => {
                if c == '$' {
                    out.push_str("$$");
                    State::Text
                } else {
                    out.push('$');
                    advance = false;
                    State::Double
                }
            }
            State::Math => match c {
                '\\' => State::MathEscape,
                _ => {
                    bare_dollar |= c == '$';
                    content.push(c);
                    State::Math
                }
            },
            State::MathEscape => {
                if c == close {
                    if content.is_empty() || bare_dollar {
                        out.push('\\');
                        out.push(if display { '[' } else { '(' });
                        out.push_str(&content);
                        out.push('\\');
                        out.push(close);
                    } else {
                        let d = if display { "$$" } else { "$" };
                        out.push_str(d);
                        out.push_str(&content);
                        out.push_str(d);
                    }
                    State::Text
                } else {
                    content.push('\\');
                    content.push(c);
                    State::Math
                }
            }
        };
        if advance {
            k += 1;
        }
    }
    match state {
        State::Math | State::MathEscape => return Err(opener),
        State::TextEscape { .. } => out.push('\\'),
        State::DollarOpen | State::DoubleClosing => out.push('$'),
        _ => {}
    }
    Ok(out)
}

fn markup_patterns() -> &'static [(Regex, &'static str)] {
    static PATTERNS: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            // TeX comments
            (r"(?m)(^|[^\\])%.*$", "$1 "),
            // references, labels, graphics, preamble: argument is not prose
            (
                r"\\(cite[a-z]*|ref|eqref|label|includegraphics|usepackage|documentclass)\*?(\[[^\]]*\])*\{[^}]*\}",
                " ",
            ),
            // environment delimiters with their options and column specs
            (r"\\(begin|end)\{[^}]*\}(\[[^\]]*\])?(\{[lcrp|@ ]*\})?", " "),
            // macro names
            (r"\\[A-Za-z]+", " "),
            // line-leading labels added or consumed by rendering
            (r"(?m)^(Title|Figure|Table):", " "),
            (r"(?m)^\s*\d+\.\s", " "),
            (r"```table", " "),
        ]
        .iter()
        .map(|(p, r)| (Regex::new(p).unwrap(), *r))
        .collect()
    })
}

/// Multiset of prose words: markup is removed by a fixed list of patterns,
/// then words are maximal runs of alphanumeric characters.
pub fn content_words(text: &str) -> BTreeMap<String, usize> {
    let mut s = text.to_string();
    for (re, replacement) in markup_patterns() {
        s = re.replace_all(&s, *replacement).into_owned();
    }
    let mut words = BTreeMap::new();
    for w in s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *words.entry(w.to_string()).or_insert(0) += 1;
    }
    words
}

/// Plain substring scan.
pub fn substring_scan<'a>(texts: impl IntoIterator<Item = &'a str>, keyword: &str) -> Vec<usize> {
    texts
        .into_iter()
        .enumerate()
        .filter(|(_, t)| t.contains(keyword))
        .map(|(i, _)| i)
        .collect()
}

/// Count of `$` not preceded by a backslash escape.
pub fn unescaped_dollars(text: &str) -> usize {
    let mut n = 0;
    let mut escaped = false;
    for c in text.chars() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '$' {
            n += 1;
        }
    }
    n
}
