//! Rewrites `\( … \)` to `$ … $` and `\[ … \]` to `$$ … $$`.
//!
//! Scanning rules:
//! - a backslash always pairs with the next character (`\\`, `\$`, `\)` …);
//! - existing `$`/`$$` spans are copied verbatim, an unclosed one runs to the end;
//! - a `\(`/`\[` span whose content is empty or holds an unescaped `$` is left
//!   as written, which keeps the rewrite idempotent;
//! - an opener without its closer fails the whole input.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unbalanced math delimiter opened at byte {offset}")]
pub struct UnbalancedDelimiters {
    pub offset: usize,
}

pub fn normalize_equation_delimiters(text: &str) -> Result<String, UnbalancedDelimiters> {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if i + 1 < bytes.len() && matches!(bytes[i + 1], b'(' | b'[') => {
                let (close, dollars) = if bytes[i + 1] == b'(' {
                    (b')', "$")
                } else {
                    (b']', "$$")
                };
                let start = i + 2;
                let end = find_escaped(bytes, start, close).ok_or(UnbalancedDelimiters { offset: i })?;
                let content = &text[start..end];
                if content.is_empty() || has_bare_dollar(content) {
                    out.push_str(&text[i..end + 2]);
                } else {
                    out.push_str(dollars);
                    out.push_str(content);
                    out.push_str(dollars);
                }
                i = end + 2;
            }
            b'$' => {
                let double = bytes.get(i + 1) == Some(&b'$');
                let open = if double { 2 } else { 1 };
                let end = find_dollar_close(bytes, i + open, double)
                    .map(|e| e + open)
                    .unwrap_or(bytes.len());
                out.push_str(&text[i..end]);
                i = end;
            }
            b'\\' => {
                let end = next_char_end(text, i + 1);
                out.push_str(&text[i..end]);
                i = end;
            }
            _ => {
                let end = next_char_end(text, i);
                out.push_str(&text[i..end]);
                i = end;
            }
        }
    }
    Ok(out)
}

/// Byte index of the `\` in the first escape pair `\<close>` at or after `from`.
fn find_escaped(bytes: &[u8], from: usize, close: u8) -> Option<usize> {
    let mut j = from;
    while j < bytes.len() {
        if bytes[j] == b'\\' {
            if bytes.get(j + 1) == Some(&close) {
                return Some(j);
            }
            j += 2;
        } else {
            j += 1;
        }
    }
    None
}

/// Byte index of the closing `$` (or `$$`) of a dollar span starting at `from`.
fn find_dollar_close(bytes: &[u8], from: usize, double: bool) -> Option<usize> {
    let mut j = from;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' => j += 2,
            b'$' if !double => return Some(j),
            b'$' if bytes.get(j + 1) == Some(&b'$') => return Some(j),
            _ => j += 1,
        }
    }
    None
}

pub(crate) fn has_bare_dollar(s: &str) -> bool {
    let bytes = s.as_bytes();
    let mut j = 0;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' => j += 2,
            b'$' => return true,
            _ => j += 1,
        }
    }
    false
}

fn next_char_end(text: &str, i: usize) -> usize {
    if i >= text.len() {
        return text.len();
    }
    i + text[i..].chars().next().map_or(1, char::len_utf8)
}
