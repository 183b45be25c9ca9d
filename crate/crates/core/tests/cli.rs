mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::fixtures::{five_document_sources, golden_dir};
use corpusforge::mock::{deterministic_llm, MockResponse, MockServer};

fn corpusforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corpusforge"))
        .current_dir(dir)
        .env_remove("CORPUSFORGE_STORE")
        .env_remove("CORPUSFORGE_LLM_URL")
        .env_remove("CORPUSFORGE_LLM_KEY")
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Config pointing the acquisition and generation stages at local fixtures.
fn write_config(dir: &Path, llm_url: &str) {
    fs::write(
        dir.join("corpusforge.toml"),
        format!(
            "store = \"store\"\noutput_dir = \"out\"\nmax_tokens = 100\n\n\
             [acquire]\nmin_interval_secs = 0.0\n\n\
             [endpoint]\nbase_url = \"{llm_url}/v1\"\nmax_attempts = 1\n"
        ),
    )
    .unwrap();
}

#[test]
fn empty_source_list_fetches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sources.txt"), "# nothing yet\n").unwrap();
    let out = corpusforge(dir.path(), &["--store", "store", "acquire", "--sources", "sources.txt"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("0 fetched"));
}

#[test]
fn missing_source_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = corpusforge(dir.path(), &["--store", "store", "acquire", "--sources", "nope.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    let line = err.lines().find(|l| l.starts_with("error ")).expect("error line");
    assert!(line.starts_with("error stage=acquire kind=config msg="), "{line}");
    assert!(line.contains("nope.txt"));
    assert!(!dir.path().join("store").exists());
}

#[test]
fn unknown_subcommand_and_bad_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(corpusforge(dir.path(), &["frobnicate"]).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "max_tokens = \"many\"\n").unwrap();
    let out = corpusforge(dir.path(), &["--config", "bad.toml", "manifest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kind=config"));
}

#[test]
fn normalize_on_empty_store_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = corpusforge(dir.path(), &["--store", "store", "normalize"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn invalid_utf8_document_becomes_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("good.mmd"), "# Good\n\nReadable text.\n").unwrap();
    fs::write(dir.path().join("bad.mmd"), b"# Bad\n\nbroken \xff\xfe bytes\n").unwrap();
    fs::write(
        dir.path().join("sources.txt"),
        "good jacow mmd good.mmd\nbad jacow mmd bad.mmd\n",
    )
    .unwrap();
    let acquire = corpusforge(dir.path(), &["--store", "store", "acquire", "--sources", "sources.txt"]);
    assert_eq!(acquire.status.code(), Some(0), "{}", stderr(&acquire));
    let out = corpusforge(dir.path(), &["--store", "store", "normalize"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let canonical = dir.path().join("out/canonical");
    assert_eq!(
        fs::read_to_string(canonical.join("good.md")).unwrap(),
        "# Good\n\nReadable text.\n"
    );
    assert!(!canonical.join("bad.md").exists());
    let warnings = fs::read_to_string(canonical.join("warnings.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = warnings.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["source_id"], "bad");
    assert_eq!(lines[0]["offset"], 14);
}

fn tree(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        out.push(path.display().to_string());
        if path.is_dir() {
            out.extend(tree(&path));
        }
    }
    out.sort();
    out
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    five_document_sources(dir.path());
    let server = MockServer::start(deterministic_llm).unwrap();
    write_config(dir.path(), &server.url());
    let before = tree(dir.path());
    let out = corpusforge(
        dir.path(),
        &[
            "--config",
            "corpusforge.toml",
            "--dry-run",
            "pipeline",
            "--sources",
            "sources.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        stdout(&out).matches("plan acquire: fetch ").count(),
        5,
        "{}",
        stdout(&out)
    );
    assert_eq!(tree(dir.path()), before);
    assert_eq!(server.hits(), 0);
}

#[test]
fn stats_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = corpusforge(
        dir.path(),
        &[
            "stats",
            "--tp-count",
            "arxiv=24949",
            "--tp-count",
            "books=1689",
            "--tp-count",
            "jacow=338207",
            "--tqa-count",
            "books=13705",
            "--tqa-count",
            "jacow=255209",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["total"], 633_759);
    assert_eq!(v["per_corpus_supervised"]["books"], 13_705);
}

/// Masks run-dependent values in a source manifest.
fn mask(manifest: &str, server_url: &str) -> String {
    let time = regex::Regex::new(r#""fetched_at": "[^"]+""#).unwrap();
    time.replace_all(
        &manifest.replace(server_url, "http://mock"),
        r#""fetched_at": "<time>""#,
    )
    .into_owned()
}

#[test]
fn acquired_manifest_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let list = five_document_sources(dir.path());
    let server = MockServer::start(|req| {
        if req.path == "/pdf/TUPB07.pdf" {
            MockResponse::ok(b"%PDF-1.4\n%mock\n".to_vec())
        } else {
            MockResponse::new(404, "")
        }
    })
    .unwrap();
    let mut text = fs::read_to_string(&list).unwrap();
    text.push_str(&format!("jacow-remote jacow pdf {}/pdf/TUPB07.pdf\n", server.url()));
    fs::write(&list, text).unwrap();
    write_config(dir.path(), "http://127.0.0.1:9");
    let out = corpusforge(
        dir.path(),
        &["--config", "corpusforge.toml", "acquire", "--sources", "sources.txt"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("6 fetched"));
    let got = mask(
        &fs::read_to_string(dir.path().join("store/manifest.json")).unwrap(),
        &server.url(),
    );
    let want = fs::read_to_string(golden_dir().join("source_manifest.json")).unwrap();
    assert_eq!(got, want);

    let again = corpusforge(
        dir.path(),
        &["--config", "corpusforge.toml", "acquire", "--sources", "sources.txt"],
    );
    assert!(stdout(&again).contains("0 fetched, 6 verified"));
    assert_eq!(server.hits(), 1);
}

#[test]
fn pipeline_then_keyword_subset() {
    let dir = tempfile::tempdir().unwrap();
    five_document_sources(dir.path());
    let server = MockServer::start(deterministic_llm).unwrap();
    write_config(dir.path(), &server.url());
    let out = corpusforge(
        dir.path(),
        &["--config", "corpusforge.toml", "pipeline", "--sources", "sources.txt"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let o = dir.path().join("out");
    for name in [
        "tp.jsonl",
        "tqa.jsonl",
        "stats.json",
        "train_manifest.json",
        "qa_raw.jsonl",
        "chunks.jsonl",
    ] {
        assert!(o.join(name).is_file(), "{name}");
    }

    let out = corpusforge(
        dir.path(),
        &["--config", "corpusforge.toml", "assemble", "--filter-keyword", "DESY"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let tp: Vec<serde_json::Value> = corpusforge::jsonl::read(&o.join("tp.DESY.jsonl")).unwrap();
    let all: Vec<serde_json::Value> = corpusforge::jsonl::read(&o.join("tp.jsonl")).unwrap();
    let expected = all
        .iter()
        .filter(|r| r["text"].as_str().unwrap().contains("DESY"))
        .count();
    assert!(expected > 0);
    assert_eq!(tp.len(), expected);
    assert!(o.join("tqa.DESY.jsonl").is_file());

    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("stats.json")).unwrap()).unwrap();
    let tqa_lines = fs::read_to_string(o.join("tqa.jsonl")).unwrap().lines().count() as u64;
    assert_eq!(stats["total"].as_u64().unwrap(), all.len() as u64 + tqa_lines);
}
