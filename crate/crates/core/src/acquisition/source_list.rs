//! Source-list files.
//!
//! One source per line, whitespace separated:
//!
//! ```text
//! # id          family  format         locator
//! 2101.00001    arxiv   latex_archive  https://arxiv.org/e-print/2101.00001
//! MOPA01        jacow   pdf            https://proceedings.jacow.org/ipac2023/pdf/MOPA01.pdf
//! wiedemann-ch1 books   mmd            /data/books/wiedemann/ch1.mmd
//! ```
//!
//! The locator is the remainder of the line, so local paths may contain
//! spaces. Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::path::Path;

use super::{AcquisitionError, SourceSpec};

pub fn load_source_list(path: &Path) -> Result<Vec<SourceSpec>, AcquisitionError> {
    let bytes = std::fs::read(path).map_err(|e| AcquisitionError::io(format!("read {}", path.display()), e))?;
    let text = String::from_utf8(bytes).map_err(|e| AcquisitionError::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_source_list(&text)
}

pub fn parse_source_list(text: &str) -> Result<Vec<SourceSpec>, AcquisitionError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut specs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let spec = parse_line(line).map_err(|message| AcquisitionError::Parse { line: line_no, message })?;
        if seen.insert(spec.id.clone(), line_no).is_some() {
            return Err(AcquisitionError::DuplicateId {
                id: spec.id,
                line: line_no,
            });
        }
        specs.push(spec);
    }
    Ok(specs)
}

fn parse_line(line: &str) -> Result<SourceSpec, String> {
    let mut rest = line;
    let mut fields = Vec::with_capacity(3);
    for name in ["id", "family", "format"] {
        let field = rest
            .split_whitespace()
            .next()
            .ok_or_else(|| format!("missing {name}"))?;
        fields.push(field);
        rest = rest[rest.find(field).unwrap() + field.len()..].trim_start();
    }
    let locator = rest.trim();
    if locator.is_empty() {
        return Err("missing locator".into());
    }
    let spec = SourceSpec {
        id: fields[0].to_string(),
        family: fields[1].parse()?,
        expected_format: fields[2].parse()?,
        locator: locator.to_string(),
    };
    spec.validate()?;
    Ok(spec)
}
