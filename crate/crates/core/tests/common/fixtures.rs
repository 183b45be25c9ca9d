//! Fixture loading and scratch stores.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use corpusforge::dataset::UnsupervisedRecord;
use corpusforge::normalize::{convert_latex_source, parse_mmd, Block, Normalized};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Documents of the normalization corpus.
pub const DOCS: &[&str] = &[
    "three_sections.mmd",
    "table_4x3.mmd",
    "article.tex",
    "book_chapter.mmd",
    "ocr_proceedings.mmd",
    "grid_table.mmd",
    "lists.mmd",
    "desy_report.mmd",
    "unbalanced.mmd",
    "multiline_display.mmd",
    "proceedings.tex",
];

pub fn doc_raw(name: &str) -> String {
    fs::read_to_string(fixtures_dir().join("docs").join(name)).unwrap()
}

pub fn load_doc(name: &str) -> Normalized {
    let raw = doc_raw(name);
    if name.ends_with(".tex") {
        convert_latex_source(name, raw.as_bytes()).unwrap()
    } else {
        parse_mmd(name, raw.as_bytes()).unwrap()
    }
}

#[derive(Debug, Deserialize)]
pub struct BlockOracle {
    pub title: Option<String>,
    pub blocks: Vec<Block>,
}

/// Hand-labeled block list committed beside a fixture as `<stem>.blocks.json`.
pub fn block_oracle(name: &str) -> BlockOracle {
    let stem = name.rsplit_once('.').unwrap().0;
    let text = fs::read_to_string(fixtures_dir().join("docs").join(format!("{stem}.blocks.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Debug, Deserialize)]
pub struct SplitOracle {
    pub max_tokens: usize,
    pub chunks: Vec<SplitChunk>,
}

#[derive(Debug, Deserialize)]
pub struct SplitChunk {
    pub heading_path: Vec<String>,
    pub starts_with: String,
    pub blocks: usize,
}

pub fn split_oracle() -> SplitOracle {
    let text = fs::read_to_string(fixtures_dir().join("docs/book_chapter.split.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Debug, Deserialize)]
pub struct DelimiterCase {
    pub category: String,
    pub input: String,
}

pub fn delimiter_cases() -> Vec<DelimiterCase> {
    fs::read_to_string(fixtures_dir().join("delimiters.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum QaLabel {
    Accepted { n_pairs: usize, dropped: Vec<String> },
    Discarded { reason: String },
}

#[derive(Debug, Deserialize)]
pub struct QaCase {
    pub name: String,
    pub response: String,
    pub expected: QaLabel,
}

pub fn qa_cases() -> Vec<QaCase> {
    let text = fs::read_to_string(fixtures_dir().join("qa/responses.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn desy_records() -> Vec<UnsupervisedRecord> {
    corpusforge::jsonl::read(&fixtures_dir().join("dataset/records.jsonl")).unwrap()
}

pub fn tar_gz(files: &[(&str, &[u8])]) -> Vec<u8> {
    let mut builder = tar::Builder::new(Vec::new());
    for (name, body) in files {
        let mut header = tar::Header::new_ustar();
        header.set_size(body.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_cksum();
        builder.append_data(&mut header, name, *body).unwrap();
    }
    let tar = builder.into_inner().unwrap();
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&tar).unwrap();
    gz.finish().unwrap()
}

/// Five local sources (two arXiv e-prints, two proceedings papers, one book
/// chapter) and a source list naming them. Returns the source-list path.
pub fn five_document_sources(dir: &Path) -> PathBuf {
    let payloads = dir.join("payloads");
    fs::create_dir_all(&payloads).unwrap();
    let docs = fixtures_dir().join("docs");
    let article = fs::read(docs.join("article.tex")).unwrap();
    fs::write(
        payloads.join("orbit.tar.gz"),
        tar_gz(&[("ms.tex", &article), ("orbit.pdf", b"%PDF-1.4")]),
    )
    .unwrap();
    for name in [
        "proceedings.tex",
        "desy_report.mmd",
        "ocr_proceedings.mmd",
        "book_chapter.mmd",
    ] {
        fs::copy(docs.join(name), payloads.join(name)).unwrap();
    }
    let list = dir.join("sources.txt");
    fs::write(
        &list,
        "# id            family  format         locator\n\
         arxiv-orbit      arxiv   latex_archive  payloads/orbit.tar.gz\n\
         arxiv-blm        arxiv   latex_archive  payloads/proceedings.tex\n\
         jacow-desy       jacow   mmd            payloads/desy_report.mmd\n\
         jacow-linac      jacow   mmd            payloads/ocr_proceedings.mmd\n\
         book-synchrotron books   mmd            payloads/book_chapter.mmd\n",
    )
    .unwrap();
    list
}
