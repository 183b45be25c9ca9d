//! LaTeX source to canonical blocks.
//!
//! Handles a fixed subset: sectioning commands, display-math environments,
//! figure/table captions, tabular bodies, lists, emphasis and verbatim.
//! Citations, references and labels are dropped; any other macro with a
//! braced argument renders as that argument and argumentless macros vanish.
//! The body is processed in blank-line separated regions; a region with
//! unbalanced braces or an unterminated construct is kept as one paragraph of
//! raw text and reported as a warning.

use super::delimiters::has_bare_dollar;
use super::mmd::parse_mmd_str;
use super::table::{tabular_rows, take_group};
use super::{decode, Block, BlockKind, CanonicalDoc, NormalizeError, Normalized, Warning};

pub fn convert_latex_source(source_id: &str, raw: &[u8]) -> Result<Normalized, NormalizeError> {
    Ok(convert_latex_str(source_id, decode(raw)?))
}

pub fn convert_latex_str(source_id: &str, raw: &str) -> Normalized {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let source = strip_comments(&unified);
    let mut warnings = Vec::new();

    let title = find_command_arg(&source.text, "\\title").map(|t| {
        let mut conv = Converter::new();
        conv.inline(t)
            .map(|s| collapse_ws(&s))
            .unwrap_or_else(|_| collapse_ws(t))
    });

    let (body_start, body_end) = body_bounds(&source.text);
    let body = &source.text[body_start..body_end];

    let mut blocks = Vec::new();
    for (start, end) in regions(body) {
        let region = &body[start..end];
        if region.trim().is_empty() {
            continue;
        }
        let offset = source.original_offset(body_start + start);
        let problem = brace_problem(region).map(|rel| (rel, "unbalanced braces".to_string()));
        let converted = match problem {
            Some(p) => Err(p),
            None => {
                let mut conv = Converter::new();
                conv.region(region).map(|_| conv.finish())
            }
        };
        match converted {
            Ok(mut bs) => blocks.append(&mut bs),
            Err((rel, message)) => {
                warnings.push(Warning {
                    source_id: source_id.to_string(),
                    offset: offset + rel,
                    message: format!("{message}; region kept as raw text"),
                });
                blocks.push(Block::paragraph(escape_paragraph(collapse_ws(region))));
            }
        }
    }

    Normalized {
        doc: CanonicalDoc {
            source_id: source_id.to_string(),
            title: title.filter(|t| !t.is_empty()),
            blocks,
        },
        warnings,
    }
}

struct Source {
    text: String,
    /// (offset in `text`, offset in the original) at the start of every kept line
    map: Vec<(usize, usize)>,
}

impl Source {
    fn original_offset(&self, at: usize) -> usize {
        let idx = self.map.partition_point(|&(s, _)| s <= at).saturating_sub(1);
        match self.map.get(idx) {
            Some(&(s, o)) => o + (at - s),
            None => at,
        }
    }
}

/// Removes `%` comments. Lines holding only a comment disappear entirely so
/// they do not end a paragraph.
fn strip_comments(text: &str) -> Source {
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::new();
    let mut orig = 0;
    for line in text.split_inclusive('\n') {
        let cut = comment_start(line);
        let kept = &line[..cut.unwrap_or(line.len())];
        let comment_only = cut.is_some() && kept.trim().is_empty();
        if !comment_only {
            map.push((out.len(), orig));
            out.push_str(kept);
            if cut.is_some() && line.ends_with('\n') {
                out.push('\n');
            }
        }
        orig += line.len();
    }
    Source { text: out, map }
}

fn comment_start(line: &str) -> Option<usize> {
    let b = line.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 2,
            b'%' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

fn body_bounds(text: &str) -> (usize, usize) {
    const BEGIN: &str = "\\begin{document}";
    match text.find(BEGIN) {
        Some(p) => {
            let start = p + BEGIN.len();
            let end = text[start..]
                .find("\\end{document}")
                .map(|e| start + e)
                .unwrap_or(text.len());
            (start, end)
        }
        None => (0, text.len()),
    }
}

fn find_command_arg<'a>(text: &'a str, cmd: &str) -> Option<&'a str> {
    let mut from = 0;
    while let Some(p) = text[from..].find(cmd) {
        let at = from + p + cmd.len();
        if text[at..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            from = at;
            continue;
        }
        let rest = skip_optional(text[at..].trim_start());
        return take_group(rest).map(|(g, _)| g);
    }
    None
}

/// Byte ranges of blank-line separated regions. Blank lines inside a matched
/// `\begin{…}`/`\end{…}` pair do not split.
fn regions(body: &str) -> Vec<(usize, usize)> {
    let mut depth: i32 = 0;
    let mut out = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    let mut prev_blank = false;
    let closes_all = env_balance_ok(body);
    for line in body.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if closes_all {
            depth += line.matches("\\begin{").count() as i32;
            depth -= line.matches("\\end{").count() as i32;
        }
        if blank && depth <= 0 && !prev_blank {
            out.push((start, pos));
            start = pos + line.len();
        } else if blank && prev_blank {
            start = pos + line.len();
        }
        prev_blank = blank;
        pos += line.len();
    }
    out.push((start, body.len()));
    out.retain(|(s, e)| e > s);
    out
}

fn env_balance_ok(body: &str) -> bool {
    body.matches("\\begin{").count() == body.matches("\\end{").count()
}

/// Relative offset of the first unbalanced brace, if any.
fn brace_problem(region: &str) -> Option<usize> {
    let b = region.as_bytes();
    let mut stack = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\\' => {
                i += 2;
                continue;
            }
            b'{' => stack.push(i),
            b'}' if stack.pop().is_none() => return Some(i),
            _ => {}
        }
        i += 1;
    }
    stack.first().copied()
}

fn skip_optional(s: &str) -> &str {
    if s.starts_with('[') {
        let mut depth = 0;
        for (i, c) in s.char_indices() {
            match c {
                '[' => depth += 1,
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        return &s[i + 1..];
                    }
                }
                _ => {}
            }
        }
    }
    s
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Guards prose that would otherwise read back as a different block kind.
fn escape_paragraph(text: String) -> String {
    let reads_back = |t: &str| {
        let blocks = parse_mmd_str("", t).doc.blocks;
        blocks.len() == 1 && blocks[0].kind == BlockKind::Paragraph && blocks[0].text == t
    };
    if text.is_empty() || reads_back(&text) {
        return text;
    }
    let escaped = format!("\\{text}");
    if reads_back(&escaped) {
        escaped
    } else {
        text
    }
}

const DISPLAY_ENVS: &[&str] = &[
    "equation",
    "equation*",
    "displaymath",
    "math",
    "multline",
    "multline*",
    "gather",
    "gather*",
    "align",
    "align*",
    "flalign",
    "flalign*",
    "alignat",
    "alignat*",
    "eqnarray",
    "eqnarray*",
];
const FLOAT_ENVS: &[(&str, &str)] = &[
    ("figure", "Figure"),
    ("figure*", "Figure"),
    ("wrapfigure", "Figure"),
    ("table", "Table"),
    ("table*", "Table"),
];
const TABULAR_ENVS: &[&str] = &["tabular", "tabular*", "tabularx", "longtable"];
const LIST_ENVS: &[&str] = &["itemize", "enumerate", "description"];
const VERBATIM_ENVS: &[&str] = &["verbatim", "verbatim*", "lstlisting", "minted"];
/// Environments whose own arguments are layout parameters, not text.
const ENV_ARG_COUNT: &[(&str, usize)] = &[
    ("thebibliography", 1),
    ("minipage", 1),
    ("wrapfigure", 2),
    ("multicols", 1),
    ("alignat", 1),
    ("alignat*", 1),
    ("minted", 1),
];

const SECTIONS: &[(&str, u8)] = &[
    ("part", 1),
    ("chapter", 1),
    ("section", 1),
    ("subsection", 2),
    ("subsubsection", 3),
    ("paragraph", 4),
    ("subparagraph", 5),
];
/// Dropped together with their braced arguments (count given).
const DROP_WITH_ARGS: &[(&str, usize)] = &[
    ("cite", 1),
    ("citep", 1),
    ("citet", 1),
    ("citealp", 1),
    ("citeauthor", 1),
    ("citeyear", 1),
    ("nocite", 1),
    ("ref", 1),
    ("eqref", 1),
    ("autoref", 1),
    ("cref", 1),
    ("Cref", 1),
    ("pageref", 1),
    ("label", 1),
    ("includegraphics", 1),
    ("bibliography", 1),
    ("bibliographystyle", 1),
    ("vspace", 1),
    ("vspace*", 1),
    ("hspace", 1),
    ("hspace*", 1),
    ("input", 1),
    ("include", 1),
    ("usepackage", 1),
    ("documentclass", 1),
    ("newcommand", 2),
    ("renewcommand", 2),
    ("providecommand", 2),
    ("DeclareMathOperator", 2),
    ("newenvironment", 3),
    ("setlength", 2),
    ("addtolength", 2),
    ("setcounter", 2),
    ("author", 1),
    ("affiliation", 1),
    ("address", 1),
    ("email", 1),
    ("date", 1),
    ("thanks", 1),
    ("title", 1),
    ("keywords", 1),
    ("bibitem", 1),
    ("color", 1),
    ("pacs", 1),
];
const TEXT_MACROS: &[(&str, &str)] = &[
    ("ldots", "..."),
    ("dots", "..."),
    ("LaTeX", "LaTeX"),
    ("TeX", "TeX"),
    ("S", "\u{a7}"),
    ("textendash", "\u{2013}"),
    ("textemdash", "\u{2014}"),
    ("textbackslash", "\\"),
    ("ae", "æ"),
    ("o", "ø"),
    ("O", "Ø"),
    ("ss", "ß"),
    ("aa", "å"),
    ("AA", "Å"),
    ("l", "ł"),
    ("textdegree", "°"),
    ("textmu", "µ"),
    ("quad", " "),
    ("qquad", " "),
    ("newline", " "),
    ("linebreak", " "),
    ("par", "\n\n"),
];

/// Region converter: accumulates inline text and emits blocks.
struct Converter {
    blocks: Vec<Block>,
    text: String,
    /// Enclosing environments, innermost last.
    envs: Vec<String>,
    enum_counter: Vec<usize>,
}

type ConvResult<T> = Result<T, (usize, String)>;

impl Converter {
    fn new() -> Self {
        Self {
            blocks: Vec::new(),
            text: String::new(),
            envs: Vec::new(),
            enum_counter: Vec::new(),
        }
    }

    fn finish(mut self) -> Vec<Block> {
        self.flush();
        self.blocks
    }

    fn flush(&mut self) {
        for piece in std::mem::take(&mut self.text).split("\n\n") {
            let collapsed = collapse_ws(piece);
            if collapsed.is_empty() {
                continue;
            }
            let block = match parse_mmd_str("", &collapsed).doc.blocks.as_slice() {
                [b] if b.kind == BlockKind::EquationInlineSpan => b.clone(),
                _ => Block::paragraph(escape_paragraph(collapsed)),
            };
            self.blocks.push(block);
        }
    }

    fn push_block(&mut self, block: Block) {
        self.flush();
        self.blocks.push(block);
    }

    /// Renders inline content (no block structure) to a string.
    fn inline(&mut self, s: &str) -> ConvResult<String> {
        let saved = std::mem::take(&mut self.text);
        let saved_blocks = self.blocks.len();
        let result = self.region(s);
        let out = std::mem::replace(&mut self.text, saved);
        // block-level constructs inside inline arguments are flattened
        let extra: Vec<Block> = self.blocks.drain(saved_blocks..).collect();
        result?;
        let mut rendered = out;
        for b in extra {
            rendered.push(' ');
            rendered.push_str(&b.render());
        }
        Ok(rendered)
    }

    fn region(&mut self, s: &str) -> ConvResult<()> {
        let b = s.as_bytes();
        let mut i = 0;
        while i < s.len() {
            match b[i] {
                b'\\' => i = self.backslash(s, i)?,
                b'$' => i = self.dollar(s, i)?,
                b'{' => {
                    let (inner, _) = take_group(&s[i..]).ok_or((i, "unclosed group".to_string()))?;
                    let rendered = self.inline(inner).map_err(|(o, m)| (o + i + 1, m))?;
                    self.text.push_str(&rendered);
                    i += inner.len() + 2;
                }
                b'}' => return Err((i, "unexpected `}`".into())),
                b'~' => {
                    self.text.push(' ');
                    i += 1;
                }
                b'`' if s[i..].starts_with("``") => {
                    self.text.push('"');
                    i += 2;
                }
                b'\'' if s[i..].starts_with("''") => {
                    self.text.push('"');
                    i += 2;
                }
                b'&' if self.in_env(TABULAR_ENVS) => {
                    self.text.push(' ');
                    i += 1;
                }
                _ => {
                    let ch = s[i..].chars().next().unwrap();
                    self.text.push(ch);
                    i += ch.len_utf8();
                }
            }
        }
        Ok(())
    }

    fn in_env(&self, names: &[&str]) -> bool {
        self.envs.iter().any(|e| names.contains(&e.as_str()))
    }

    fn dollar(&mut self, s: &str, i: usize) -> ConvResult<usize> {
        let double = s[i..].starts_with("$$");
        let open = if double { 2 } else { 1 };
        let close = find_dollar(&s[i + open..], double).ok_or((i, "unclosed math".to_string()))? + i + open;
        let inner = &s[i + open..close];
        if double {
            self.display(inner.trim(), i)?;
        } else {
            self.text.push('$');
            self.text.push_str(inner);
            self.text.push('$');
        }
        Ok(close + open)
    }

    fn display(&mut self, inner: &str, at: usize) -> ConvResult<()> {
        let cleaned = clean_display(inner);
        if cleaned.is_empty() {
            return Ok(());
        }
        if has_bare_dollar(&cleaned) {
            return Err((at, "`$` inside display math".into()));
        }
        self.push_block(Block::display_equation(cleaned));
        Ok(())
    }

    fn backslash(&mut self, s: &str, i: usize) -> ConvResult<usize> {
        let rest = &s[i + 1..];
        let Some(next) = rest.chars().next() else {
            return Ok(s.len());
        };
        if !next.is_ascii_alphabetic() {
            return self.control_symbol(s, i, next);
        }
        let name_len = rest.bytes().take_while(|c| c.is_ascii_alphabetic()).count();
        let mut name = rest[..name_len].to_string();
        let mut j = i + 1 + name_len;
        if s[j..].starts_with('*') {
            name.push('*');
            j += 1;
        }
        self.command(s, i, j, &name)
    }

    fn control_symbol(&mut self, s: &str, i: usize, next: char) -> ConvResult<usize> {
        let after = i + 1 + next.len_utf8();
        match next {
            '\\' => {
                self.text.push(' ');
                let rest = skip_optional(&s[after..]);
                Ok(s.len() - rest.len())
            }
            '(' => {
                let close = s[after..].find("\\)").ok_or((i, "unclosed \\(".to_string()))? + after;
                self.text.push('$');
                self.text.push_str(&s[after..close]);
                self.text.push('$');
                Ok(close + 2)
            }
            '[' => {
                let close = s[after..].find("\\]").ok_or((i, "unclosed \\[".to_string()))? + after;
                self.display(s[after..close].trim(), i)?;
                Ok(close + 2)
            }
            '$' => {
                self.text.push_str("\\$");
                Ok(after)
            }
            '%' | '&' | '#' | '_' | '{' | '}' => {
                self.text.push(next);
                Ok(after)
            }
            ',' | ';' | ' ' | ':' => {
                self.text.push(' ');
                Ok(after)
            }
            '!' | '/' | '-' | '@' => Ok(after),
            '\'' | '`' | '"' | '^' | '~' | '=' | '.' => {
                let (base, end) = accent_argument(s, after);
                self.text.push_str(&accented(next, &base));
                Ok(end)
            }
            _ => {
                self.text.push(next);
                Ok(after)
            }
        }
    }

    fn command(&mut self, s: &str, start: usize, j: usize, name: &str) -> ConvResult<usize> {
        let bare = name.trim_end_matches('*');
        if name == "begin" {
            return self.environment(s, start, j);
        }
        if name == "end" {
            return Err((start, "\\end without matching \\begin".into()));
        }
        if let Some(&(_, level)) = SECTIONS.iter().find(|(n, _)| *n == bare) {
            let (arg, end) = required_arg(s, j).ok_or((start, format!("\\{name} without argument")))?;
            let text = collapse_ws(&self.inline(arg).map_err(|(o, m)| (o + start, m))?);
            self.push_block(Block::heading(level, text));
            return Ok(end);
        }
        if let Some(&(_, n)) = DROP_WITH_ARGS.iter().find(|(d, _)| *d == name || *d == bare) {
            let mut end = j;
            for _ in 0..n {
                match required_arg(s, end) {
                    Some((_, e)) => end = e,
                    None => break,
                }
            }
            // A dropped citation leaves no gap before punctuation.
            if s[end..].starts_with(['.', ',', ';', ':', ')']) {
                let kept = self.text.trim_end().len();
                self.text.truncate(kept);
            }
            return Ok(end);
        }
        if bare == "caption" {
            let (arg, end) = required_arg(s, j).ok_or((start, "\\caption without argument".to_string()))?;
            let text = collapse_ws(&self.inline(arg).map_err(|(o, m)| (o + start, m))?);
            let prefix = self
                .envs
                .iter()
                .rev()
                .find_map(|e| FLOAT_ENVS.iter().find(|(f, _)| f == e).map(|(_, p)| *p));
            let para = match prefix {
                Some(p) => format!("{p}: {text}"),
                None => text,
            };
            self.flush();
            self.text.push_str(&para);
            self.flush();
            return Ok(end);
        }
        if bare == "item" {
            self.flush();
            let rest = &s[j..];
            let trimmed = rest.trim_start();
            let mut end = j;
            let label = if trimmed.starts_with('[') {
                let after = skip_optional(trimmed);
                let label_src = &trimmed[1..trimmed.len() - after.len() - 1];
                end = s.len() - after.len();
                Some(collapse_ws(&self.inline(label_src).map_err(|(o, m)| (o + start, m))?))
            } else {
                None
            };
            let marker = match (self.envs.last().map(String::as_str), self.enum_counter.last_mut()) {
                (Some("enumerate"), Some(n)) => {
                    *n += 1;
                    format!("{n}. ")
                }
                _ => "- ".to_string(),
            };
            self.text.push_str(&marker);
            if let Some(l) = label {
                self.text.push_str(&format!("**{l}** "));
            }
            return Ok(end);
        }
        if bare == "href" {
            let (_, after_url) = required_arg(s, j).ok_or((start, "\\href without url".to_string()))?;
            let (text, end) = required_arg(s, after_url).ok_or((start, "\\href without text".to_string()))?;
            let rendered = self.inline(text).map_err(|(o, m)| (o + start, m))?;
            self.text.push_str(&rendered);
            return Ok(end);
        }
        if bare == "footnote" {
            let (arg, end) = required_arg(s, j).ok_or((start, "\\footnote without argument".to_string()))?;
            let text = collapse_ws(&self.inline(arg).map_err(|(o, m)| (o + start, m))?);
            if !text.is_empty() {
                self.text.push_str(&format!(" ({text})"));
            }
            return Ok(end);
        }
        let emphasis = match bare {
            "emph" | "textit" | "textsl" | "mathit" => Some("*"),
            "textbf" => Some("**"),
            "texttt" => Some("`"),
            _ => None,
        };
        if let Some(mark) = emphasis {
            let (arg, end) = required_arg(s, j).ok_or((start, format!("\\{name} without argument")))?;
            let text = self.inline(arg).map_err(|(o, m)| (o + start, m))?;
            let text = text.trim();
            if !text.is_empty() {
                self.text.push_str(mark);
                self.text.push_str(text);
                self.text.push_str(mark);
            }
            return Ok(end);
        }
        if let Some(&(_, out)) = TEXT_MACROS.iter().find(|(m, _)| *m == name) {
            self.text.push_str(out);
            return Ok(skip_empty_group(s, j));
        }
        // generic: render a directly attached braced argument, else drop
        let after_opt = skip_optional(&s[j..]);
        let k = s.len() - after_opt.len();
        if s[k..].starts_with('{') {
            let (arg, end) = required_arg(s, k).ok_or((k, "unclosed group".to_string()))?;
            let rendered = self.inline(arg).map_err(|(o, m)| (o + k + 1, m))?;
            self.text.push_str(&rendered);
            return Ok(end);
        }
        Ok(j)
    }

    fn environment(&mut self, s: &str, start: usize, j: usize) -> ConvResult<usize> {
        let (env, after_name) = required_arg(s, j).ok_or((start, "\\begin without name".to_string()))?;
        let env = env.trim().to_string();
        let end_tag = format!("\\end{{{env}}}");
        let body_end = find_env_end(s, after_name, &env).ok_or((start, format!("unterminated environment `{env}`")))?;
        let mut body_start = s.len() - skip_optional(&s[after_name..]).len();
        let env_args = ENV_ARG_COUNT
            .iter()
            .find(|(e, _)| *e == env)
            .map(|(_, n)| *n)
            .unwrap_or(0);
        for _ in 0..env_args {
            let rest = skip_optional(&s[body_start..]);
            let k = s.len() - rest.len();
            body_start = required_arg(s, k).map(|(_, e)| e).unwrap_or(k);
        }
        let body = &s[body_start..body_end];
        let end = body_end + end_tag.len();

        if DISPLAY_ENVS.contains(&env.as_str()) {
            let wrapped = match env.trim_end_matches('*') {
                "align" | "flalign" | "alignat" | "eqnarray" => {
                    format!("\\begin{{aligned}}\n{}\n\\end{{aligned}}", clean_display(body))
                }
                "gather" => format!("\\begin{{gathered}}\n{}\n\\end{{gathered}}", clean_display(body)),
                _ => body.to_string(),
            };
            self.display(&wrapped, start)?;
            return Ok(end);
        }
        if TABULAR_ENVS.contains(&env.as_str()) {
            let markup = &s[start..end];
            let rows = tabular_rows(markup).unwrap_or_default();
            let mut lines = Vec::new();
            for row in rows {
                let mut cells = Vec::new();
                for cell in row {
                    let rendered = self.inline(&cell).map_err(|(o, m)| (o + start, m))?;
                    cells.push(collapse_ws(&rendered));
                }
                if cells.iter().any(|c| !c.is_empty()) {
                    lines.push(cells.join("  ").trim_end().to_string());
                }
            }
            self.push_block(Block::table(lines.join("\n")));
            return Ok(end);
        }
        if VERBATIM_ENVS.contains(&env.as_str()) {
            let code: Vec<&str> = body.trim_matches('\n').lines().map(str::trim_end).collect();
            let code = code.join("\n");
            self.push_block(Block::other(format!("```\n{code}\n```")));
            return Ok(end);
        }
        let is_list = LIST_ENVS.contains(&env.as_str());
        if is_list || FLOAT_ENVS.iter().any(|(f, _)| *f == env) {
            self.flush();
        }
        self.envs.push(env.clone());
        if env == "enumerate" {
            self.enum_counter.push(0);
        }
        let result = self.region(body).map_err(|(o, m)| (o + body_start, m));
        if env == "enumerate" {
            self.enum_counter.pop();
        }
        self.envs.pop();
        result?;
        if is_list || FLOAT_ENVS.iter().any(|(f, _)| *f == env) {
            self.flush();
        }
        Ok(end)
    }
}

/// Position of the `\end{env}` that closes an environment whose body starts at `from`.
fn find_env_end(s: &str, from: usize, env: &str) -> Option<usize> {
    let open = format!("\\begin{{{env}}}");
    let close = format!("\\end{{{env}}}");
    let mut depth = 1;
    let mut i = from;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with(&open) {
            depth += 1;
            i += open.len();
        } else if rest.starts_with(&close) {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
            i += close.len();
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    None
}

/// `{arg}` following position `at` (after optional `[…]` and whitespace).
fn required_arg(s: &str, at: usize) -> Option<(&str, usize)> {
    let rest = skip_optional(s[at..].trim_start()).trim_start();
    let (inner, after) = take_group(rest)?;
    Some((inner, s.len() - after.len()))
}

fn skip_empty_group(s: &str, at: usize) -> usize {
    if s[at..].starts_with("{}") {
        at + 2
    } else {
        at
    }
}

fn find_dollar(s: &str, double: bool) -> Option<usize> {
    let b = s.as_bytes();
    let mut j = 0;
    while j < b.len() {
        match b[j] {
            b'\\' => j += 2,
            b'$' if !double => return Some(j),
            b'$' if b.get(j + 1) == Some(&b'$') => return Some(j),
            _ => j += 1,
        }
    }
    None
}

/// Trims, drops blank lines and trailing spaces, removes `\label{…}`.
fn clean_display(inner: &str) -> String {
    let mut s = inner.to_string();
    while let Some(p) = s.find("\\label{") {
        match take_group(&s[p + 6..]) {
            Some((g, _)) => {
                let end = p + 6 + g.len() + 2;
                s.replace_range(p..end, "");
            }
            None => break,
        }
    }
    s.lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

fn accent_argument(s: &str, at: usize) -> (String, usize) {
    let rest = &s[at..];
    if let Some((g, after)) = take_group(rest) {
        return (g.to_string(), s.len() - after.len());
    }
    match rest.chars().next() {
        Some(c) => (c.to_string(), at + c.len_utf8()),
        None => (String::new(), at),
    }
}

fn accented(accent: char, base: &str) -> String {
    let combining = match accent {
        '\'' => '\u{301}',
        '`' => '\u{300}',
        '"' => '\u{308}',
        '^' => '\u{302}',
        '~' => '\u{303}',
        '=' => '\u{304}',
        '.' => '\u{307}',
        _ => return base.to_string(),
    };
    const PRECOMPOSED: &[(char, char, char)] = &[
        ('"', 'a', 'ä'),
        ('"', 'o', 'ö'),
        ('"', 'u', 'ü'),
        ('"', 'A', 'Ä'),
        ('"', 'O', 'Ö'),
        ('"', 'U', 'Ü'),
        ('"', 'e', 'ë'),
        ('"', 'i', 'ï'),
        ('\'', 'a', 'á'),
        ('\'', 'e', 'é'),
        ('\'', 'i', 'í'),
        ('\'', 'o', 'ó'),
        ('\'', 'u', 'ú'),
        ('\'', 'E', 'É'),
        ('\'', 'c', 'ć'),
        ('\'', 'n', 'ń'),
        ('\'', 's', 'ś'),
        ('\'', 'z', 'ź'),
        ('`', 'a', 'à'),
        ('`', 'e', 'è'),
        ('`', 'o', 'ò'),
        ('^', 'a', 'â'),
        ('^', 'e', 'ê'),
        ('^', 'o', 'ô'),
        ('^', 'i', 'î'),
        ('~', 'n', 'ñ'),
        ('~', 'a', 'ã'),
        ('~', 'o', 'õ'),
    ];
    let mut chars = base.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => PRECOMPOSED
            .iter()
            .find(|(a, b, _)| *a == accent && *b == c)
            .map(|(_, _, p)| p.to_string())
            .unwrap_or_else(|| format!("{c}{combining}")),
        _ => base.to_string(),
    }
}
