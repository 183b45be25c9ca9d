//! Table flattening: pipe tables, grid tables and LaTeX `tabular` bodies
//! become plain text, one row per line, cells separated by two spaces.

const CELL_SEP: &str = "  ";

pub fn flatten_table(table_markup: &str) -> String {
    if let Some(flat) = flatten_latex(table_markup) {
        return flat;
    }
    let lines: Vec<&str> = table_markup.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.is_empty() || !lines.iter().all(|l| is_pipe_row(l) || is_grid_border(l)) {
        return table_markup.to_string();
    }
    let rows: Vec<Vec<String>> = lines
        .iter()
        .filter(|l| !is_grid_border(l))
        .map(|l| split_pipe_row(l))
        .filter(|cells| !is_separator_row(cells))
        .collect();
    join_rows(&rows)
}

pub(crate) fn is_pipe_row(line: &str) -> bool {
    line.len() >= 2 && line.starts_with('|') && line.ends_with('|') || line == "|"
}

pub(crate) fn is_grid_border(line: &str) -> bool {
    line.len() >= 2
        && line.starts_with('+')
        && line.ends_with('+')
        && line.chars().all(|c| matches!(c, '+' | '-' | '=' | ':'))
}

fn is_separator_row(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells.iter().all(|c| {
            let c = c.trim();
            let core = c.trim_start_matches(':').trim_end_matches(':');
            !core.is_empty() && core.chars().all(|ch| ch == '-' || ch == '=')
        })
}

/// Splits on unescaped `|` outside `$…$` spans, dropping the outer borders.
fn split_pipe_row(line: &str) -> Vec<String> {
    let inner = line.strip_prefix('|').unwrap_or(line);
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    split_cells(inner, '|')
}

fn split_cells(row: &str, sep: char) -> Vec<String> {
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut chars = row.chars().peekable();
    let mut in_math = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                current.push(c);
                if let Some(n) = chars.next() {
                    current.push(n);
                }
            }
            '$' => {
                in_math = !in_math;
                current.push(c);
            }
            c if c == sep && !in_math => {
                cells.push(current.trim().to_string());
                current.clear();
            }
            c => current.push(c),
        }
    }
    cells.push(current.trim().to_string());
    cells
}

fn join_rows(rows: &[Vec<String>]) -> String {
    rows.iter()
        .filter(|cells| cells.iter().any(|c| !c.is_empty()))
        .map(|cells| cells.join(CELL_SEP).trim_end().to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Raw cell text of a LaTeX tabular environment, or `None` when the markup has
/// no `\begin{tabular…}`.
pub(crate) fn tabular_rows(markup: &str) -> Option<Vec<Vec<String>>> {
    let (body_start, env) = ["tabular", "tabular*", "tabularx", "longtable", "array"]
        .iter()
        .filter_map(|env| {
            markup
                .find(&format!("\\begin{{{env}}}"))
                .map(|p| (p + env.len() + 8, *env))
        })
        .min_by_key(|(p, _)| *p)?;
    let end = markup[body_start..]
        .find(&format!("\\end{{{env}}}"))
        .map(|p| body_start + p)
        .unwrap_or(markup.len());
    let mut body = &markup[body_start..end];
    // width argument of tabular*/tabularx, then the column spec
    let spec_args = if matches!(env, "tabular*" | "tabularx") { 2 } else { 1 };
    for _ in 0..spec_args {
        body = skip_optional_and_group(body);
    }
    let mut rows = Vec::new();
    for raw_row in split_rows(body) {
        let row = strip_rules(&raw_row);
        if row.trim().is_empty() {
            continue;
        }
        let cells = split_cells(&row, '&')
            .into_iter()
            .map(|c| unwrap_multicolumn(&c))
            .collect();
        rows.push(cells);
    }
    Some(rows)
}

fn flatten_latex(markup: &str) -> Option<String> {
    let rows = tabular_rows(markup)?;
    let mut out = Vec::new();
    if let Some(caption) = braced_after(markup, "\\caption") {
        out.push(format!("Table: {}", caption.trim()));
    }
    let body = join_rows(&rows);
    if !body.is_empty() {
        out.push(body);
    }
    Some(out.join("\n"))
}

/// Splits a tabular body on `\\` row terminators, respecting `\\` inside braces.
fn split_rows(body: &str) -> Vec<String> {
    let mut rows = Vec::new();
    let mut current = String::new();
    let mut depth = 0i32;
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.peek() {
                Some('\\') if depth == 0 => {
                    chars.next();
                    rows.push(std::mem::take(&mut current));
                    // optional spacing argument: \\[2pt]
                    if chars.peek() == Some(&'[') {
                        for n in chars.by_ref() {
                            if n == ']' {
                                break;
                            }
                        }
                    }
                }
                Some(_) => {
                    current.push(c);
                    current.push(chars.next().unwrap());
                }
                None => current.push(c),
            },
            '{' => {
                depth += 1;
                current.push(c);
            }
            '}' => {
                depth -= 1;
                current.push(c);
            }
            _ => current.push(c),
        }
    }
    rows.push(current);
    rows
}

fn strip_rules(row: &str) -> String {
    let mut s = row.to_string();
    for rule in [
        "\\hline",
        "\\toprule",
        "\\midrule",
        "\\bottomrule",
        "\\endhead",
        "\\endfirsthead",
    ] {
        s = s.replace(rule, "");
    }
    while let Some(p) = s.find("\\cline") {
        let rest = skip_optional_and_group(&s[p + 6..]);
        let consumed = s.len() - rest.len();
        s.replace_range(p..consumed, "");
    }
    s
}

fn unwrap_multicolumn(cell: &str) -> String {
    let t = cell.trim();
    for cmd in ["\\multicolumn", "\\multirow"] {
        if let Some(rest) = t.strip_prefix(cmd) {
            let rest = skip_optional_and_group(skip_optional_and_group(rest));
            if let Some((arg, _)) = take_group(rest.trim_start()) {
                return arg.trim().to_string();
            }
        }
    }
    t.to_string()
}

fn braced_after<'a>(s: &'a str, cmd: &str) -> Option<&'a str> {
    let p = s.find(cmd)?;
    let rest = s[p + cmd.len()..].trim_start();
    let rest = if rest.starts_with('[') {
        rest.find(']').map(|q| &rest[q + 1..]).unwrap_or(rest)
    } else {
        rest
    };
    take_group(rest.trim_start()).map(|(g, _)| g)
}

/// Skips one optional `[…]` argument, then one `{…}` group, returning the rest.
fn skip_optional_and_group(s: &str) -> &str {
    let mut rest = s.trim_start();
    if rest.starts_with('[') {
        if let Some(q) = rest.find(']') {
            rest = rest[q + 1..].trim_start();
        }
    }
    match take_group(rest) {
        Some((_, after)) => after,
        None => rest,
    }
}

/// Splits `{inner}rest` into `(inner, rest)`.
pub(crate) fn take_group(s: &str) -> Option<(&str, &str)> {
    if !s.starts_with('{') {
        return None;
    }
    let mut depth = 0i32;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((&s[1..i], &s[i + 1..]));
                }
            }
            _ => {}
        }
    }
    None
}
