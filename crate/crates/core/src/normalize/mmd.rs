//! MultiMarkdown reader for OCR output and for canonical text.
//!
//! Recognized blocks, tried in this order at the start of a line:
//! fenced code (```` ```table ```` fences hold flattened tables), ATX headings,
//! `[MISSING_PAGE…]` markers, display math opened by `$$` or `\[` whose closer
//! ends a line of the same paragraph run, pipe/grid table rows, and LaTeX
//! `table`/`tabular` environments. Everything else is paragraph text; a
//! paragraph that is exactly one `$…$` span becomes an inline-equation block.

use super::delimiters::has_bare_dollar;
use super::table::{is_grid_border, is_pipe_row};
use super::{
    decode, flatten_table, normalize_equation_delimiters, Block, BlockKind, CanonicalDoc, NormalizeError, Normalized,
    Warning,
};

/// Display math may not span more lines than this.
const MAX_DISPLAY_LINES: usize = 200;

pub fn parse_mmd(source_id: &str, raw: &[u8]) -> Result<Normalized, NormalizeError> {
    Ok(parse_mmd_str(source_id, decode(raw)?))
}

pub fn parse_mmd_str(source_id: &str, raw: &str) -> Normalized {
    let lines = preprocess(raw);
    let mut parser = Parser {
        source_id,
        lines: &lines,
        warnings: Vec::new(),
    };
    let (title, blocks) = parser.run();
    Normalized {
        doc: CanonicalDoc {
            source_id: source_id.to_string(),
            title,
            blocks,
        },
        warnings: parser.warnings,
    }
}

struct Line {
    text: String,
    offset: usize,
}

impl Line {
    fn is_blank(&self) -> bool {
        self.text.is_empty()
    }
}

/// Unifies line endings, strips trailing whitespace and collapses blank runs.
fn preprocess(raw: &str) -> Vec<Line> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<Line> = Vec::new();
    let mut offset = 0;
    for l in unified.split('\n') {
        let text = l.trim_end().to_string();
        let blank = text.is_empty();
        if !(blank && lines.last().is_none_or(Line::is_blank)) {
            lines.push(Line { text, offset });
        }
        offset += l.len() + 1;
    }
    while lines.last().is_some_and(Line::is_blank) {
        lines.pop();
    }
    lines
}

struct Parser<'a> {
    source_id: &'a str,
    lines: &'a [Line],
    warnings: Vec<Warning>,
}

impl Parser<'_> {
    fn run(&mut self) -> (Option<String>, Vec<Block>) {
        let lines = self.lines;
        let mut i = 0;
        let mut title = None;
        if let Some(first) = lines.first() {
            let next_blank = lines.get(1).is_none_or(Line::is_blank);
            if let Some(t) = first.text.strip_prefix("Title:") {
                let t = t.trim();
                if next_blank && !t.is_empty() {
                    title = Some(t.to_string());
                    i = 1;
                }
            }
        }
        let mut blocks = Vec::new();
        while i < lines.len() {
            if lines[i].is_blank() {
                i += 1;
                continue;
            }
            let run_end = self.run_end(i);
            if let Some((mut block, next)) = self.block_at(i, run_end) {
                if matches!(block.kind, BlockKind::Heading | BlockKind::Table) {
                    block.text = self.delimiters(&block.text, i);
                }
                blocks.push(block);
                i = next;
                continue;
            }
            let mut j = i + 1;
            while j < run_end && self.block_at(j, run_end).is_none() {
                j += 1;
            }
            blocks.push(self.paragraph(i, j));
            i = j;
        }
        (title, blocks)
    }

    fn run_end(&self, from: usize) -> usize {
        (from..self.lines.len())
            .find(|&k| self.lines[k].is_blank())
            .unwrap_or(self.lines.len())
    }

    /// The non-paragraph block starting at line `i`, and the index after it.
    fn block_at(&self, i: usize, run_end: usize) -> Option<(Block, usize)> {
        let line = self.lines[i].text.as_str();
        let trimmed = line.trim();

        if let Some(info) = line.strip_prefix("```") {
            return Some(self.fence(i, info.trim()));
        }
        if let Some((level, text)) = atx_heading(line) {
            return Some((Block::heading(level, text), i + 1));
        }
        if trimmed.starts_with("[MISSING_PAGE") && trimmed.ends_with(']') {
            return Some((Block::other(line), i + 1));
        }
        let start = line.trim_start();
        if start.starts_with("$$") || start.starts_with("\\[") {
            if let Some(found) = self.display(i, run_end) {
                return Some(found);
            }
        }
        if is_pipe_row(trimmed) || is_grid_border(trimmed) {
            let mut j = i + 1;
            while j < run_end {
                let t = self.lines[j].text.trim();
                if !(is_pipe_row(t) || is_grid_border(t)) {
                    break;
                }
                j += 1;
            }
            let markup = self.join(i, j);
            return Some((Block::table(flatten_table(&markup)), j));
        }
        for (begin, end) in [("\\begin{table", "\\end{table"), ("\\begin{tabular", "\\end{tabular")] {
            if start.starts_with(begin) {
                let close = (i..run_end).find(|&k| self.lines[k].text.contains(end))?;
                let markup = self.join(i, close + 1);
                return Some((Block::table(flatten_table(&markup)), close + 1));
            }
        }
        None
    }

    fn fence(&self, i: usize, info: &str) -> (Block, usize) {
        let close = (i + 1..self.lines.len()).find(|&k| self.lines[k].text.trim() == "```");
        let (inner_end, next) = match close {
            Some(k) => (k, k + 1),
            None => (self.lines.len(), self.lines.len()),
        };
        if info == "table" {
            (Block::table(self.join(i + 1, inner_end)), next)
        } else {
            (Block::other(self.join(i, next)), next)
        }
    }

    fn display(&self, i: usize, run_end: usize) -> Option<(Block, usize)> {
        let end = run_end.min(i + MAX_DISPLAY_LINES);
        let mut joined = self.join(i, end);
        let lead = joined.len() - joined.trim_start().len();
        joined.drain(..lead);
        let double = joined.starts_with("$$");
        let body = &joined[2..];
        let close = if double {
            find_double_dollar(body)?
        } else {
            find_bracket_close(body)?
        };
        let after = &body[close + 2..];
        if !(after.is_empty() || after.starts_with('\n')) {
            return None;
        }
        let inner = body[..close].trim();
        if inner.is_empty() || has_bare_dollar(inner) {
            return None;
        }
        let consumed = body[..close].matches('\n').count();
        Some((Block::display_equation(inner), i + consumed + 1))
    }

    fn paragraph(&mut self, i: usize, j: usize) -> Block {
        let text = self.join(i, j);
        let text = self.delimiters(&text, i);
        match inline_span(&text) {
            Some(inner) => Block::inline_equation(inner),
            None => Block::paragraph(text),
        }
    }

    /// Delimiter rewrite; on failure the text is kept and a warning recorded.
    fn delimiters(&mut self, text: &str, line: usize) -> String {
        match normalize_equation_delimiters(text) {
            Ok(t) => t,
            Err(e) => {
                self.warn(
                    line,
                    e.offset,
                    "unbalanced math delimiter, block kept as written".to_string(),
                );
                text.to_string()
            }
        }
    }

    fn warn(&mut self, line: usize, rel: usize, message: String) {
        let offset = self.lines[line].offset + rel;
        self.warnings.push(Warning {
            source_id: self.source_id.to_string(),
            offset,
            message,
        });
    }

    fn join(&self, from: usize, to: usize) -> String {
        let mut s = String::new();
        for (k, l) in self.lines[from..to].iter().enumerate() {
            if k > 0 {
                s.push('\n');
            }
            s.push_str(&l.text);
        }
        while s.ends_with('\n') {
            s.pop();
        }
        s
    }
}

fn atx_heading(line: &str) -> Option<(u8, &str)> {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &line[hashes..];
    if rest.is_empty() {
        return Some((hashes as u8, ""));
    }
    if rest.starts_with(char::is_whitespace) {
        Some((hashes as u8, rest.trim()))
    } else {
        None
    }
}

/// Inner text when `text` is exactly one `$…$` span.
fn inline_span(text: &str) -> Option<&str> {
    if text.len() < 3 || !text.starts_with('$') || text.starts_with("$$") || !text.ends_with('$') {
        return None;
    }
    let inner = &text[1..text.len() - 1];
    let trailing_backslashes = inner.bytes().rev().take_while(|&b| b == b'\\').count();
    if inner.is_empty() || has_bare_dollar(inner) || trailing_backslashes % 2 == 1 {
        return None;
    }
    Some(inner)
}

fn find_double_dollar(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    let mut j = 0;
    while j < b.len() {
        match b[j] {
            b'\\' => j += 2,
            b'$' if b.get(j + 1) == Some(&b'$') => return Some(j),
            _ => j += 1,
        }
    }
    None
}

fn find_bracket_close(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    let mut j = 0;
    while j < b.len() {
        if b[j] == b'\\' {
            if b.get(j + 1) == Some(&b']') {
                return Some(j);
            }
            j += 2;
        } else {
            j += 1;
        }
    }
    None
}
