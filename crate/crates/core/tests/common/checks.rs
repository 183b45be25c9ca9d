//! One function per acceptance criterion. `Ok` carries a short summary.

use std::collections::{BTreeMap, HashMap};
use std::fs;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use corpusforge::chunker::{chunk_document, split_sections, Chunk};
use corpusforge::cli::{cmd_pipeline, Context, ExitStatus, PipelineConfig, STATS_FILE, TP_FILE, TQA_FILE};
use corpusforge::dataset::{compute_stats, filter_by_keyword, ChunkTexts};
use corpusforge::manifest::{default_paper_config, TargetWeight};
use corpusforge::mock::{deterministic_llm, MockServer};
use corpusforge::normalize::{
    normalize_equation_delimiters, parse_mmd_str, render_canonical, Block, BlockKind, CanonicalDoc,
};
use corpusforge::qagen::{parse_qa_response, ParseResult};
use corpusforge::Corpus;

use super::fixtures::{self, QaLabel};
use super::oracle::{content_words, delimiter_oracle, substring_scan, unescaped_dollars};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn manifest_fidelity() -> Check {
    let c = default_paper_config();
    let fields: [(&str, bool); 10] = [
        ("lora_rank", c.lora_rank == 64),
        ("lora_alpha", c.lora_alpha == 128),
        (
            "target_weights",
            c.target_weights
                == [
                    TargetWeight::Query,
                    TargetWeight::Key,
                    TargetWeight::Value,
                    TargetWeight::Projection,
                ],
        ),
        ("per_device_batch", c.per_device_batch == 2),
        ("grad_accum", c.grad_accum == 16),
        ("epochs", c.epochs == 4),
        ("learning_rate", c.learning_rate == 5e-5),
        ("context_tokens", c.context_tokens == 16_384),
        ("base_model", c.base_model == "vicuna-7b-16k-v1.5"),
        ("effective_batch", c.effective_batch() == 32),
    ];
    for (name, ok) in fields {
        ensure(ok, || format!("{name} differs: {c:?}"))?;
    }
    Ok("10 fields match".into())
}

/// Dataset counts as published, by corpus.
pub fn published_counts() -> (BTreeMap<Corpus, u64>, BTreeMap<Corpus, u64>) {
    let tp = BTreeMap::from([
        (Corpus::Arxiv, 24_949),
        (Corpus::Books, 1_689),
        (Corpus::Jacow, 338_207),
    ]);
    let tqa = BTreeMap::from([(Corpus::Books, 13_705), (Corpus::Jacow, 255_209)]);
    (tp, tqa)
}

fn count_map() -> impl Strategy<Value = BTreeMap<Corpus, u64>> {
    prop::collection::btree_map(prop::sample::select(Corpus::ALL.to_vec()), 0u64..1_000_000_000, 0..=3)
}

pub fn stats_regression() -> Check {
    let (tp, tqa) = published_counts();
    let stats = compute_stats(&tp, &tqa);
    ensure(stats.total == 633_759, || format!("total {}", stats.total))?;
    run_property(1000, (count_map(), count_map()), |(tp, tqa)| {
        let s = compute_stats(&tp, &tqa);
        let mut sum = 0u64;
        for v in s
            .per_corpus_unsupervised
            .values()
            .chain(s.per_corpus_supervised.values())
        {
            sum += v;
        }
        prop_assert_eq!(s.total, sum);
        prop_assert_eq!(s.per_corpus_unsupervised, tp);
        prop_assert_eq!(s.per_corpus_supervised, tqa);
        Ok(())
    })?;
    Ok("total 633759; identity held on 1000 random maps".into())
}

/// Strings built from delimiter-heavy tokens.
pub fn delimiter_soup() -> impl Strategy<Value = String> {
    let token = prop::sample::select(vec![
        "\\(", "\\)", "\\[", "\\]", "$", "$$", "\\$", "\\\\", "\\", "x", "a b", " ", "\n", "^2", "é", "{", "}",
    ]);
    prop::collection::vec(token, 0..24).prop_map(|t| t.concat())
}

fn delimiters_effective(s: &str) -> String {
    normalize_equation_delimiters(s).unwrap_or_else(|_| s.to_string())
}

pub fn delimiter_agreement() -> Check {
    let cases = fixtures::delimiter_cases();
    ensure(cases.len() == 200, || format!("{} cases", cases.len()))?;
    let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
    for case in &cases {
        let got = normalize_equation_delimiters(&case.input).map_err(|e| e.offset);
        let want = delimiter_oracle(&case.input);
        ensure(got == want, || {
            format!("{} {:?}: got {got:?}, oracle {want:?}", case.category, case.input)
        })?;
        *per_category.entry(&case.category).or_default() += 1;
    }
    run_property(10_000, prop_oneof![delimiter_soup(), any::<String>()], |s| {
        let once = delimiters_effective(&s);
        prop_assert_eq!(delimiters_effective(&once), once.clone());
        prop_assert_eq!(
            normalize_equation_delimiters(&s).map_err(|e| e.offset),
            delimiter_oracle(&s)
        );
        Ok(())
    })?;
    Ok(format!("200/200 agree {per_category:?}; idempotent on 10000 strings"))
}

fn strip_doc_id(d: &CanonicalDoc) -> (Option<String>, Vec<Block>) {
    (d.title.clone(), d.blocks.clone())
}

pub fn round_trip() -> Check {
    ensure(fixtures::DOCS.len() >= 10, || "fewer than 10 fixtures".into())?;
    let mut n_blocks = 0;
    for name in fixtures::DOCS {
        let doc = fixtures::load_doc(name).doc;
        let rendered = render_canonical(&doc);
        let again = parse_mmd_str(name, &rendered).doc;
        ensure(strip_doc_id(&again) == strip_doc_id(&doc), || {
            format!(
                "{name}: round trip changed blocks\n{:#?}\nvs\n{:#?}",
                doc.blocks, again.blocks
            )
        })?;
        let input_words = content_words(&fixtures::doc_raw(name));
        let output_words = content_words(&rendered);
        ensure(input_words == output_words, || {
            format!("{name}: word multisets differ\ninput  {input_words:?}\noutput {output_words:?}")
        })?;
        for b in &doc.blocks {
            ensure(unescaped_dollars(&b.render()).is_multiple_of(2), || {
                format!("{name}: odd `$` count in {b:?}")
            })?;
        }
        n_blocks += doc.blocks.len();
    }
    Ok(format!(
        "{} documents, {n_blocks} blocks, no word loss",
        fixtures::DOCS.len()
    ))
}

/// Non-heading blocks of the chunk texts, in order.
pub fn chunk_body_blocks(chunks: &[Chunk]) -> Vec<Block> {
    chunks
        .iter()
        .flat_map(|c| parse_mmd_str(&c.source_id, &c.text).doc.blocks)
        .filter(|b| b.kind != BlockKind::Heading)
        .collect()
}

pub fn coverage_holds(doc: &CanonicalDoc, chunks: &[Chunk], max_tokens: usize) -> Result<(), String> {
    let multiset = |blocks: &[Block]| {
        let mut m: HashMap<Block, usize> = HashMap::new();
        for b in blocks.iter().filter(|b| b.kind == BlockKind::Paragraph) {
            *m.entry(b.clone()).or_default() += 1;
        }
        m
    };
    let body: Vec<Block> = doc.blocks.iter().filter(|b| !b.is_heading()).cloned().collect();
    let from_chunks = chunk_body_blocks(chunks);
    ensure(multiset(&body) == multiset(&from_chunks), || {
        format!("{}: paragraph multiset differs at budget {max_tokens}", doc.source_id)
    })?;
    ensure(body == from_chunks, || {
        format!("{}: block order differs at budget {max_tokens}", doc.source_id)
    })?;
    for c in chunks {
        let single_block = parse_mmd_str("", &c.text).doc.blocks.len() == 1;
        ensure(c.est_tokens <= max_tokens || (c.oversized && single_block), || {
            format!("{}: {} tokens over budget {max_tokens}", c.chunk_id, c.est_tokens)
        })?;
        ensure(!c.oversized || c.est_tokens > max_tokens, || {
            format!("{} flagged but fits", c.chunk_id)
        })?;
    }
    Ok(())
}

pub const BUDGETS: [usize; 6] = [8, 25, 60, 100, 400, 12_000];

pub fn chunker_coverage() -> Check {
    let mut n_chunks = 0;
    let mut flagged = 0;
    for name in fixtures::DOCS {
        let doc = fixtures::load_doc(name).doc;
        for max in BUDGETS {
            for chunks in [
                split_sections(&doc, max).map_err(|e| e.to_string())?,
                chunk_document(&doc, Corpus::Books, max).map_err(|e| e.to_string())?,
                chunk_document(&doc, Corpus::Jacow, max).map_err(|e| e.to_string())?,
            ] {
                coverage_holds(&doc, &chunks, max)?;
                n_chunks += chunks.len();
                flagged += chunks.iter().filter(|c| c.oversized).count();
            }
        }
    }
    Ok(format!(
        "{} documents x {} budgets: {n_chunks} chunks, {flagged} flagged indivisible",
        fixtures::DOCS.len(),
        BUDGETS.len()
    ))
}

pub fn label_matches(result: &ParseResult, label: &QaLabel) -> bool {
    match (result, label) {
        (
            ParseResult::Accepted { pairs, dropped },
            QaLabel::Accepted {
                n_pairs,
                dropped: codes,
            },
        ) => {
            pairs.len() == *n_pairs
                && dropped
                    .iter()
                    .map(|v| v.kind.code())
                    .eq(codes.iter().map(String::as_str))
        }
        (ParseResult::Discard(reason), QaLabel::Discarded { reason: want }) => reason == want,
        _ => false,
    }
}

pub fn pair_invariants(result: &ParseResult) -> Result<(), String> {
    if let ParseResult::Accepted { pairs, .. } = result {
        ensure(!pairs.is_empty(), || "accepted with no pairs".into())?;
        for p in pairs {
            let q = p.question.trim();
            ensure(q.ends_with('?') && q.len() > 1, || {
                format!("bad question {:?}", p.question)
            })?;
            ensure(!p.answer.trim().is_empty(), || {
                format!("empty answer for {:?}", p.question)
            })?;
        }
    }
    Ok(())
}

/// Random text biased toward the response grammar.
pub fn response_soup() -> impl Strategy<Value = String> {
    let token = prop::sample::select(vec![
        "1. ",
        "2) ",
        "10. ",
        "Q: ",
        "A: ",
        "Question: ",
        "Answer: ",
        "?",
        " ",
        "\n",
        "\n\n",
        "what",
        "x",
        "\r\n",
        "\t",
        "0. ",
        "99999. ",
    ]);
    prop::collection::vec(token, 0..40).prop_map(|t| t.concat())
}

pub fn qa_parser() -> Check {
    let cases = fixtures::qa_cases();
    let accepted = cases
        .iter()
        .filter(|c| matches!(c.expected, QaLabel::Accepted { .. }))
        .count();
    ensure(cases.len() == 20 && accepted == 10, || {
        format!("{} cases, {accepted} accept labels", cases.len())
    })?;
    for case in &cases {
        let result = parse_qa_response(&case.response);
        ensure(label_matches(&result, &case.expected), || {
            format!("{}: got {result:?}, label {:?}", case.name, case.expected)
        })?;
        pair_invariants(&result).map_err(|e| format!("{}: {e}", case.name))?;
    }
    let bytes = prop::collection::vec(any::<u8>(), 0..512).prop_map(|b| String::from_utf8_lossy(&b).into_owned());
    run_property(3000, prop_oneof![bytes, response_soup()], |s| {
        let result = parse_qa_response(&s);
        prop_assert!(pair_invariants(&result).is_ok(), "{:?}", result);
        Ok(())
    })?;
    Ok("20/20 labels matched (10 accept, 10 discard); 3000 random inputs kept invariants".into())
}

pub fn desy_filter() -> Check {
    let records = fixtures::desy_records();
    ensure(records.len() == 50, || format!("{} records", records.len()))?;
    let selected = filter_by_keyword(&records, "DESY", &ChunkTexts::new()).map_err(|e| e.to_string())?;
    let oracle: Vec<_> = substring_scan(records.iter().map(|r| r.text.as_str()), "DESY")
        .into_iter()
        .map(|i| records[i].clone())
        .collect();
    ensure(selected == oracle, || {
        format!("selected {} vs oracle {}", selected.len(), oracle.len())
    })?;
    Ok(format!("{} of 50 selected, equal to the scan", selected.len()))
}

/// Runs the whole pipeline twice on the five-document store.
pub fn end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sources = fixtures::five_document_sources(dir.path());
    let server = MockServer::start(deterministic_llm).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig {
        store: dir.path().join("store"),
        output_dir: dir.path().join("out"),
        sources: Some(sources),
        max_tokens: 100,
        ..PipelineConfig::default()
    };
    config.acquire.min_interval_secs = 0.0;
    config.endpoint.base_url = format!("{}/v1", server.url());
    config.endpoint.max_attempts = 1;
    let ctx = Context::new(config, false).quiet(true);

    let read = |name: &str| fs::read(ctx.config.out(name)).map_err(|e| format!("{name}: {e}"));
    let status = cmd_pipeline(&ctx).map_err(|e| e.to_string())?;
    ensure(status == ExitStatus::Success, || format!("first run exited {status:?}"))?;
    let first_hits = server.hits();
    ensure(first_hits > 0, || "first run made no generation requests".into())?;
    let first = [read(TP_FILE)?, read(TQA_FILE)?, read(STATS_FILE)?];
    ensure(first.iter().all(|f| !f.is_empty()), || "empty output".into())?;

    let status = cmd_pipeline(&ctx).map_err(|e| e.to_string())?;
    ensure(status == ExitStatus::Success, || {
        format!("second run exited {status:?}")
    })?;
    let second = [read(TP_FILE)?, read(TQA_FILE)?, read(STATS_FILE)?];
    for (name, (a, b)) in [TP_FILE, TQA_FILE, STATS_FILE]
        .iter()
        .zip(first.iter().zip(second.iter()))
    {
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    let extra = server.hits() - first_hits;
    ensure(extra == 0, || format!("second run made {extra} requests"))?;
    Ok(format!(
        "{first_hits} requests on the first run, 0 on the second; outputs byte-identical"
    ))
}
