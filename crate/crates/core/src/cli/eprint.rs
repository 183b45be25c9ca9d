//! Main `.tex` file of an arXiv e-print payload.
//!
//! An e-print is a gzipped tar of the submission, a gzipped single `.tex`
//! file, or plain LaTeX. `\input`/`\include` of files in the archive are
//! inlined.

use std::collections::BTreeMap;
use std::io::Read;

use flate2::read::GzDecoder;

const MAX_INCLUDE_DEPTH: usize = 8;

pub fn extract_main_tex(payload: &[u8]) -> Result<Vec<u8>, String> {
    let bytes = if payload.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(payload)
            .read_to_end(&mut out)
            .map_err(|e| format!("gzip: {e}"))?;
        out
    } else {
        payload.to_vec()
    };
    if !is_tar(&bytes) {
        return Ok(bytes);
    }
    let files = tex_files(&bytes)?;
    let main = pick_main(&files).ok_or_else(|| "archive holds no .tex file with \\documentclass".to_string())?;
    let text = String::from_utf8_lossy(&files[main]).into_owned();
    Ok(inline_inputs(&text, &files, 0).into_bytes())
}

fn is_tar(bytes: &[u8]) -> bool {
    bytes.len() > 262 && &bytes[257..262] == b"ustar"
}

fn tex_files(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut archive = tar::Archive::new(bytes);
    let mut files = BTreeMap::new();
    for entry in archive.entries().map_err(|e| format!("tar: {e}"))? {
        let mut entry = entry.map_err(|e| format!("tar: {e}"))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let name = entry
            .path()
            .map_err(|e| format!("tar: {e}"))?
            .to_string_lossy()
            .trim_start_matches("./")
            .to_string();
        if !name.ends_with(".tex") {
            continue;
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(|e| format!("tar: {e}"))?;
        files.insert(name, data);
    }
    Ok(files)
}

/// The file declaring `\documentclass`; among several, `main.tex`/`ms.tex`,
/// then the largest.
fn pick_main(files: &BTreeMap<String, Vec<u8>>) -> Option<&String> {
    let candidates: Vec<&String> = files
        .iter()
        .filter(|(_, data)| String::from_utf8_lossy(data).contains("\\documentclass"))
        .map(|(name, _)| name)
        .collect();
    candidates
        .iter()
        .find(|n| matches!(n.as_str(), "main.tex" | "ms.tex"))
        .copied()
        .or_else(|| candidates.iter().copied().max_by_key(|n| files[*n].len()))
}

fn inline_inputs(text: &str, files: &BTreeMap<String, Vec<u8>>, depth: usize) -> String {
    if depth >= MAX_INCLUDE_DEPTH {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some((pos, cmd)) = ["\\input{", "\\include{"]
        .iter()
        .filter_map(|c| rest.find(c).map(|p| (p, *c)))
        .min_by_key(|(p, _)| *p)
    {
        let arg_start = pos + cmd.len();
        let Some(close) = rest[arg_start..].find('}') else {
            break;
        };
        let name = rest[arg_start..arg_start + close].trim();
        out.push_str(&rest[..pos]);
        let key = if name.ends_with(".tex") {
            name.to_string()
        } else {
            format!("{name}.tex")
        };
        match files.get(&key) {
            Some(data) => {
                out.push('\n');
                out.push_str(&inline_inputs(&String::from_utf8_lossy(data), files, depth + 1));
                out.push('\n');
            }
            None => out.push_str(&rest[pos..arg_start + close + 1]),
        }
        rest = &rest[arg_start + close + 1..];
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    pub(crate) fn tar_gz(files: &[(&str, &str)]) -> Vec<u8> {
        let mut builder = tar::Builder::new(Vec::new());
        for (name, body) in files {
            let mut header = tar::Header::new_ustar();
            header.set_size(body.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append_data(&mut header, name, body.as_bytes()).unwrap();
        }
        let tar = builder.into_inner().unwrap();
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(&tar).unwrap();
        gz.finish().unwrap()
    }

    #[test]
    fn plain_tex_passes_through() {
        assert_eq!(extract_main_tex(b"\\section{A}").unwrap(), b"\\section{A}");
    }

    #[test]
    fn gzipped_single_file() {
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(b"hello").unwrap();
        assert_eq!(extract_main_tex(&gz.finish().unwrap()).unwrap(), b"hello");
    }

    #[test]
    fn archive_main_with_inputs() {
        let payload = tar_gz(&[
            ("sections/intro.tex", "Intro text."),
            (
                "paper.tex",
                "\\documentclass{article}\\begin{document}\\input{sections/intro}\\end{document}",
            ),
            ("fig.png", "binary"),
        ]);
        let main = String::from_utf8(extract_main_tex(&payload).unwrap()).unwrap();
        assert_eq!(
            main,
            "\\documentclass{article}\\begin{document}\nIntro text.\n\\end{document}"
        );
    }

    #[test]
    fn archive_without_main_fails() {
        let payload = tar_gz(&[("a.tex", "no class here")]);
        assert!(extract_main_tex(&payload).is_err());
    }
}
