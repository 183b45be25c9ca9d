mod common;

use proptest::prelude::*;

use common::checks::{self, chunk_body_blocks, coverage_holds};
use common::fixtures::{load_doc, split_oracle};
use corpusforge::chunker::{chunk_document, estimate_tokens, split_sections, ChunkError};
use corpusforge::normalize::{Block, CanonicalDoc};
use corpusforge::Corpus;

fn doc(blocks: Vec<Block>) -> CanonicalDoc {
    CanonicalDoc {
        source_id: "d".into(),
        title: None,
        blocks,
    }
}

/// A paragraph of exactly `tokens` estimated tokens.
fn para(tag: char, tokens: usize) -> Block {
    Block::paragraph(tag.to_string().repeat(tokens * 4))
}

#[test]
fn book_chapter_matches_annotated_split() {
    let oracle = split_oracle();
    let chunks = split_sections(&load_doc("book_chapter.mmd").doc, oracle.max_tokens).unwrap();
    assert_eq!(chunks.len(), oracle.chunks.len());
    for (i, (got, want)) in chunks.iter().zip(&oracle.chunks).enumerate() {
        assert_eq!(got.heading_path, want.heading_path, "chunk {i}");
        assert!(got.text.starts_with(&want.starts_with), "chunk {i}: {:?}", got.text);
        assert_eq!(
            chunk_body_blocks(std::slice::from_ref(got)).len(),
            want.blocks,
            "chunk {i}"
        );
        assert_eq!(got.ordinal, i);
        assert!(got.est_tokens <= oracle.max_tokens);
    }
}

#[test]
fn two_small_sections_give_two_chunks() {
    let d = doc(vec![
        Block::heading(1, "A"),
        para('a', 10),
        Block::heading(1, "B"),
        para('b', 10),
    ]);
    let chunks = split_sections(&d, 1000).unwrap();
    assert_eq!(chunks.len(), 2);
    assert_eq!(chunks[0].heading_path, ["A"]);
    assert_eq!(chunks[1].heading_path, ["B"]);
    assert_eq!(chunks[0].est_tokens, 10);
}

#[test]
fn oversized_section_splits_into_subsections() {
    let d = doc(vec![
        Block::heading(1, "Top"),
        Block::heading(2, "One"),
        para('x', 100),
        Block::heading(2, "Two"),
        para('y', 100),
        Block::heading(2, "Three"),
        para('z', 100),
    ]);
    let chunks = split_sections(&d, 150).unwrap();
    assert_eq!(chunks.len(), 3);
    let paths: Vec<_> = chunks.iter().map(|c| c.heading_path.join("/")).collect();
    assert_eq!(paths, ["Top/One", "Top/Two", "Top/Three"]);
    assert!(chunks.iter().all(|c| c.est_tokens == 100 && !c.oversized));
}

#[test]
fn paper_fits_in_one_chunk_book_splits() {
    let d = doc(vec![
        Block::heading(1, "A"),
        para('a', 10),
        Block::heading(1, "B"),
        para('b', 10),
    ]);
    assert_eq!(chunk_document(&d, Corpus::Jacow, 1000).unwrap().len(), 1);
    assert_eq!(chunk_document(&d, Corpus::Books, 1000).unwrap().len(), 2);
    let chapter = load_doc("book_chapter.mmd").doc;
    assert_eq!(chunk_document(&chapter, Corpus::Jacow, 12_000).unwrap().len(), 1);
    assert_eq!(
        chunk_document(&chapter, Corpus::Books, 100).unwrap(),
        split_sections(&chapter, 100).unwrap()
    );
}

#[test]
fn indivisible_block_is_flagged() {
    let d = doc(vec![Block::heading(1, "H"), para('q', 50)]);
    let chunks = split_sections(&d, 20).unwrap();
    assert_eq!(chunks.len(), 1);
    assert!(chunks[0].oversized);
    assert_eq!(chunks[0].est_tokens, 50);
}

#[test]
fn rejected_inputs() {
    assert_eq!(split_sections(&doc(vec![para('a', 1)]), 0), Err(ChunkError::ZeroBudget));
    assert!(matches!(
        split_sections(&doc(vec![]), 10),
        Err(ChunkError::EmptyDocument { .. })
    ));
}

#[test]
fn token_estimate_is_quarter_chars_rounded_up() {
    assert_eq!(estimate_tokens(""), 0);
    assert_eq!(estimate_tokens("abcd"), 1);
    assert_eq!(estimate_tokens("abcde"), 2);
    assert_eq!(estimate_tokens("äöüß"), 1);
}

#[test]
fn fixture_corpus_is_covered_at_every_budget() {
    checks::chunker_coverage().unwrap();
}

#[test]
fn chunking_is_deterministic() {
    for name in common::fixtures::DOCS {
        let d = load_doc(name).doc;
        assert_eq!(split_sections(&d, 60).unwrap(), split_sections(&d, 60).unwrap());
    }
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z]{1,12}", 1..60).prop_map(|w| w.join(" "))
}

fn block() -> impl Strategy<Value = Block> {
    prop_oneof![
        1 => (1u8..=4, "[A-Z][a-z]{1,8}").prop_map(|(l, t)| Block::heading(l, t)),
        4 => text().prop_map(|t| Block::paragraph(format!("{t}."))),
        1 => "[a-z]{1,20}".prop_map(|m| Block::display_equation(format!("{m} = 0"))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_paragraph_lands_in_exactly_one_chunk(
        blocks in prop::collection::vec(block(), 1..30),
        max in 1usize..300,
        corpus in prop::sample::select(vec![Corpus::Books, Corpus::Jacow, Corpus::Arxiv]),
    ) {
        let d = doc(blocks);
        for chunks in [split_sections(&d, max).unwrap(), chunk_document(&d, corpus, max).unwrap()] {
            prop_assert!(coverage_holds(&d, &chunks, max).is_ok(), "{:?}", coverage_holds(&d, &chunks, max));
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.ordinal, i);
                prop_assert_eq!(c.est_tokens, estimate_tokens(&c.text));
            }
        }
    }
}
