//! Stage commands. Each returns an exit status or a one-line error.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use super::config::PipelineConfig;
use super::eprint::extract_main_tex;
use crate::acquisition::{
    load_source_list, ArxivLister, ExpectedFormat, FetchState, Fetcher, SourceManifest, SourceSpec, Store,
};
use crate::chunker::{chunk_document, Chunk, ChunkError};
use crate::dataset::{compute_stats, count_by_corpus, emit_tp, emit_tqa, filter_by_keyword, ChunkTexts, DatasetStats};
use crate::http::{HttpClient, RateLimiter, RetryPolicy};
use crate::jsonl;
use crate::manifest::{manifest_json, write_manifest, MANIFEST_FILE};
use crate::normalize::{
    convert_latex_source, parse_mmd, parse_mmd_str, render_canonical, CanonicalDoc, Normalized, Warning,
};
use crate::qagen::{
    generate_for_chunks, load_records, AnswerTemplate, Endpoint, GenerationMode, Generator, Outcome, PromptTemplate,
    QAPair, RecordLog,
};
use crate::Corpus;

pub const WARNINGS_FILE: &str = "warnings.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const QA_RAW_FILE: &str = "qa_raw.jsonl";
pub const QA_PAIRS_FILE: &str = "qa_pairs.jsonl";
pub const TP_FILE: &str = "tp.jsonl";
pub const TQA_FILE: &str = "tqa.jsonl";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    Partial = 1,
    Config = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageError {
    pub stage: &'static str,
    pub kind: &'static str,
    pub message: String,
    pub status: ExitStatus,
}

impl StageError {
    pub fn config(stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind: "config",
            message: message.into(),
            status: ExitStatus::Config,
        }
    }

    pub fn runtime(stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind: "runtime",
            message: message.into(),
            status: ExitStatus::Partial,
        }
    }
}

impl fmt::Display for StageError {
    /// `error stage=<stage> kind=<kind> msg="<escaped message>"`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "error stage={} kind={} msg={:?}",
            self.stage, self.kind, self.message
        )
    }
}

pub type StageResult = Result<ExitStatus, StageError>;

pub struct Context {
    pub config: PipelineConfig,
    pub dry_run: bool,
    /// Suppresses the per-stage summary lines on stdout.
    pub quiet: bool,
}

impl Context {
    pub fn new(config: PipelineConfig, dry_run: bool) -> Self {
        Self {
            config,
            dry_run,
            quiet: false,
        }
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    fn report(&self, line: impl fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn store(&self) -> Store {
        Store::new(&self.config.store)
    }

    fn load_manifest(&self, stage: &'static str) -> Result<SourceManifest, StageError> {
        SourceManifest::load(&self.store().manifest_path()).map_err(|e| StageError::config(stage, e.to_string()))
    }
}

fn plan(stage: &str, line: impl fmt::Display) {
    println!("plan {stage}: {line}");
}

pub fn cmd_acquire(ctx: &Context) -> StageResult {
    const STAGE: &str = "acquire";
    let cfg = &ctx.config;
    let settings = &cfg.acquire;
    if cfg.sources.is_none() && settings.arxiv_categories.is_empty() {
        return Err(StageError::config(STAGE, "no source list or arxiv category configured"));
    }
    let mut specs = Vec::new();
    if let Some(list) = &cfg.sources {
        if !list.is_file() {
            return Err(StageError::config(
                STAGE,
                format!("source list {} not found", list.display()),
            ));
        }
        let base = list.parent().unwrap_or(Path::new("."));
        specs = load_source_list(list)
            .map_err(|e| StageError::config(STAGE, format!("{}: {e}", list.display())))?
            .into_iter()
            .map(|s| resolve_locator(s, base))
            .collect();
    }

    let limiter = Arc::new(RateLimiter::new(Duration::from_secs_f64(settings.min_interval_secs)));
    let retry = RetryPolicy {
        max_attempts: settings.max_attempts.max(1),
        ..RetryPolicy::default()
    };
    let client = HttpClient::new(retry, limiter, Duration::from_secs(settings.timeout_secs));

    if !settings.arxiv_categories.is_empty() {
        let mut lister = ArxivLister::new(client.clone());
        if let (Some(api), Some(eprint)) = (&settings.arxiv_api, &settings.arxiv_eprint_base) {
            lister = lister.with_endpoints(api, eprint);
        }
        for category in &settings.arxiv_categories {
            if ctx.dry_run {
                plan(STAGE, format!("list {category} from {}", settings.arxiv_from_year));
                continue;
            }
            let listed = lister
                .list_category(category, settings.arxiv_from_year)
                .map_err(|e| StageError::runtime(STAGE, format!("listing {category}: {e}")))?;
            log::info!(target: "acquire", "{category}: {} articles listed", listed.len());
            for spec in listed {
                if !specs.iter().any(|s: &SourceSpec| s.id == spec.id) {
                    specs.push(spec);
                }
            }
        }
    }

    let mut manifest = ctx.load_manifest(STAGE)?;
    let mut changed = false;
    for spec in specs {
        changed |= manifest.register(spec);
    }
    if ctx.dry_run {
        for e in manifest.entries() {
            let action = match e.fetch_state {
                FetchState::Fetched => "verify",
                FetchState::Pending | FetchState::Failed => "fetch",
            };
            plan(STAGE, format!("{action} {} ({})", e.spec.id, e.spec.locator));
        }
        return Ok(ExitStatus::Success);
    }

    let store = ctx.store();
    let manifest_path = store.manifest_path();
    fs::create_dir_all(store.root()).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    if changed || !manifest_path.exists() {
        manifest
            .save(&manifest_path)
            .map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    }
    let fetcher = Fetcher::new(store, client).with_concurrency(settings.concurrency);
    let summary = fetcher
        .fetch_all(&mut manifest, |m| m.save(&manifest_path))
        .map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    ctx.report(format_args!(
        "acquire: {} fetched, {} verified, {} failed",
        summary.fetched,
        summary.verified,
        summary.failed.len()
    ));
    for (id, message) in &summary.failed {
        log::error!(target: "acquire", "{id}: {message}");
    }
    Ok(if summary.failed.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::Partial
    })
}

/// Relative local locators are taken relative to the source list.
fn resolve_locator(mut spec: SourceSpec, base: &Path) -> SourceSpec {
    if !spec.is_remote() && !spec.locator.starts_with("file://") && Path::new(&spec.locator).is_relative() {
        spec.locator = base.join(&spec.locator).display().to_string();
    }
    spec
}

pub fn cmd_normalize(ctx: &Context) -> StageResult {
    const STAGE: &str = "normalize";
    let manifest = ctx.load_manifest(STAGE)?;
    let store = ctx.store();
    let fetched: Vec<_> = manifest
        .entries()
        .iter()
        .filter(|e| e.fetch_state == FetchState::Fetched)
        .collect();
    if ctx.dry_run {
        for e in &fetched {
            plan(
                STAGE,
                format!("{} -> {}", e.spec.id, canonical_path(&ctx.config, &e.spec.id).display()),
            );
        }
        return Ok(ExitStatus::Success);
    }
    let dir = ctx.config.canonical_dir();
    fs::create_dir_all(&dir).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    let mut warnings: Vec<Warning> = Vec::new();
    let (mut written, mut failed) = (0, 0);
    for entry in &fetched {
        let id = &entry.spec.id;
        let out = canonical_path(&ctx.config, id);
        match normalize_payload(&store, &entry.spec) {
            Ok(n) => {
                let mut text = render_canonical(&n.doc);
                text.push('\n');
                jsonl::write_atomic(&out, &text).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
                warnings.extend(n.warnings);
                written += 1;
            }
            Err((offset, message)) => {
                log::warn!(target: "normalize", "{id}: {message}");
                warnings.push(Warning {
                    source_id: id.clone(),
                    offset,
                    message,
                });
                let _ = fs::remove_file(&out);
                failed += 1;
            }
        }
    }
    jsonl::write(&dir.join(WARNINGS_FILE), &warnings).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    ctx.report(format_args!(
        "normalize: {written} written, {failed} failed, {} warnings",
        warnings.len()
    ));
    Ok(if failed > 0 && written == 0 {
        ExitStatus::Partial
    } else {
        ExitStatus::Success
    })
}

fn canonical_path(cfg: &PipelineConfig, id: &str) -> PathBuf {
    cfg.canonical_dir().join(format!("{id}.md"))
}

/// A failure carries the byte offset it applies to (0 when not positional).
fn normalize_payload(store: &Store, spec: &SourceSpec) -> Result<Normalized, (usize, String)> {
    let payload = store.payload_path(spec);
    let read = |p: &Path| fs::read(p).map_err(|e| (0, format!("read {}: {e}", p.display())));
    let encoding = |e: crate::normalize::NormalizeError| match e {
        crate::normalize::NormalizeError::Encoding { valid_up_to } => (valid_up_to, e.to_string()),
    };
    match spec.expected_format {
        ExpectedFormat::LatexArchive => {
            let tex = extract_main_tex(&read(&payload)?).map_err(|m| (0, format!("e-print: {m}")))?;
            convert_latex_source(&spec.id, &tex).map_err(encoding)
        }
        ExpectedFormat::Mmd => parse_mmd(&spec.id, &read(&payload)?).map_err(encoding),
        ExpectedFormat::Pdf => {
            let ocr = payload.with_extension("mmd");
            if !ocr.is_file() {
                return Err((
                    0,
                    format!("no OCR output for PDF; expected MultiMarkdown at {}", ocr.display()),
                ));
            }
            parse_mmd(&spec.id, &read(&ocr)?).map_err(encoding)
        }
    }
}

/// Canonical documents of fetched sources, in manifest order.
fn load_canonical(ctx: &Context, stage: &'static str) -> Result<Vec<(Corpus, CanonicalDoc)>, StageError> {
    let manifest = ctx.load_manifest(stage)?;
    let mut docs = Vec::new();
    for e in manifest.entries() {
        let path = canonical_path(&ctx.config, &e.spec.id);
        match fs::read_to_string(&path) {
            Ok(text) => docs.push((e.spec.family, parse_mmd_str(&e.spec.id, &text).doc)),
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => {
                if e.fetch_state == FetchState::Fetched {
                    log::warn!(target: stage, "{}: no canonical text, skipped", e.spec.id);
                }
            }
            Err(err) => return Err(StageError::runtime(stage, format!("{}: {err}", path.display()))),
        }
    }
    Ok(docs)
}

/// Chunks of the documents questions are generated for (books and papers).
fn qa_chunks(docs: &[(Corpus, CanonicalDoc)], max_tokens: usize) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    for (corpus, doc) in docs.iter().filter(|(c, _)| *c != Corpus::Arxiv) {
        match chunk_document(doc, *corpus, max_tokens) {
            Ok(mut c) => chunks.append(&mut c),
            Err(ChunkError::EmptyDocument { source_id }) => {
                log::warn!(target: "generate", "{source_id}: empty document skipped")
            }
            Err(e) => log::error!(target: "generate", "{}: {e}", doc.source_id),
        }
    }
    chunks
}

pub fn cmd_generate(ctx: &Context) -> StageResult {
    const STAGE: &str = "generate";
    let cfg = &ctx.config;
    let template = match &cfg.generate.template_file {
        Some(p) => PromptTemplate::new(read_text(p, STAGE)?),
        None => Ok(PromptTemplate::default()),
    }
    .map_err(|e| StageError::config(STAGE, e.to_string()))?;
    let mode = if cfg.generate.two_pass {
        let answers = match &cfg.generate.answer_template_file {
            Some(p) => AnswerTemplate::new(read_text(p, STAGE)?),
            None => Ok(AnswerTemplate::default()),
        }
        .map_err(|e| StageError::config(STAGE, e.to_string()))?;
        GenerationMode::TwoPass(answers)
    } else {
        GenerationMode::OnePass
    };

    let docs = load_canonical(ctx, STAGE)?;
    let chunks = qa_chunks(&docs, cfg.max_tokens);
    let raw_path = cfg.out(QA_RAW_FILE);
    let prior = load_records(&raw_path).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    if ctx.dry_run {
        let done: std::collections::HashSet<&str> = prior
            .iter()
            .filter(|r| r.outcome.is_final())
            .map(|r| r.chunk_id.as_str())
            .collect();
        let pending = chunks.iter().filter(|c| !done.contains(c.chunk_id.as_str())).count();
        plan(
            STAGE,
            format!(
                "{} chunks, {pending} to request from {}",
                chunks.len(),
                cfg.endpoint.base_url
            ),
        );
        return Ok(ExitStatus::Success);
    }

    write_chunks(cfg, &chunks).map_err(|e| StageError::runtime(STAGE, e))?;
    let generator = Generator::new(Endpoint::new(cfg.endpoint.clone()), template)
        .with_mode(mode)
        .with_concurrency(cfg.generate.concurrency);
    let mut log = RecordLog::open(&raw_path).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    let generation = generate_for_chunks(&generator, &chunks, &prior, |r| log.append(r))
        .map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    jsonl::write(&cfg.out(QA_PAIRS_FILE), &generation.pairs).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;

    let mut counts = [0usize; 3];
    for r in &generation.records {
        counts[match r.outcome {
            Outcome::Accepted { .. } => 0,
            Outcome::Discarded { .. } => 1,
            Outcome::Failed { .. } => 2,
        }] += 1;
    }
    ctx.report(format_args!(
        "generate: {} chunks, {} requested, {} accepted, {} discarded, {} failed, {} pairs",
        chunks.len(),
        generation.requested,
        counts[0],
        counts[1],
        counts[2],
        generation.pairs.len()
    ));
    Ok(if counts[2] > 0 {
        ExitStatus::Partial
    } else {
        ExitStatus::Success
    })
}

fn read_text(path: &Path, stage: &'static str) -> Result<String, StageError> {
    fs::read_to_string(path).map_err(|e| StageError::config(stage, format!("{}: {e}", path.display())))
}

/// `chunks.jsonl` plus one Markdown file per chunk under `chunks/<source_id>/`.
fn write_chunks(cfg: &PipelineConfig, chunks: &[Chunk]) -> Result<(), String> {
    jsonl::write(&cfg.out(CHUNKS_FILE), chunks).map_err(|e| e.to_string())?;
    let dir = cfg.out("chunks");
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    for c in chunks {
        let path = dir.join(&c.source_id).join(format!("{}.md", c.ordinal));
        let mut text = c.with_headings();
        text.push('\n');
        jsonl::write_atomic(&path, &text).map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub fn cmd_assemble(ctx: &Context) -> StageResult {
    const STAGE: &str = "assemble";
    let cfg = &ctx.config;
    let docs = load_canonical(ctx, STAGE)?;
    let tp = emit_tp(&docs, cfg.max_tokens).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    let pairs_path = cfg.out(QA_PAIRS_FILE);
    let pairs: Vec<QAPair> = if pairs_path.exists() {
        jsonl::read(&pairs_path).map_err(|e| StageError::runtime(STAGE, e.to_string()))?
    } else {
        log::warn!(target: "assemble", "{} not found, supervised set is empty", pairs_path.display());
        Vec::new()
    };
    let manifest = ctx.load_manifest(STAGE)?;
    let corpus_of: HashMap<String, Corpus> = manifest
        .entries()
        .iter()
        .map(|e| (e.spec.id.clone(), e.spec.family))
        .collect();
    let tqa = emit_tqa(&pairs, &corpus_of).map_err(|e| StageError::runtime(STAGE, e.to_string()))?;
    let stats = compute_stats(
        &count_by_corpus(&tp.records, |r| r.corpus),
        &count_by_corpus(&tqa, |r| r.corpus),
    );
    if ctx.dry_run {
        plan(
            STAGE,
            format!(
                "{} text records, {} QA records, total {}",
                tp.records.len(),
                tqa.len(),
                stats.total
            ),
        );
        return Ok(ExitStatus::Success);
    }
    let write = |name: &str, result: Result<(), jsonl::JsonlError>| {
        result.map_err(|e| StageError::runtime(STAGE, format!("{name}: {e}")))
    };
    write(TP_FILE, jsonl::write(&cfg.out(TP_FILE), &tp.records))?;
    write(TQA_FILE, jsonl::write(&cfg.out(TQA_FILE), &tqa))?;
    write(
        STATS_FILE,
        jsonl::write_atomic(&cfg.out(STATS_FILE), &jsonl::to_pretty(&stats)),
    )?;
    if let Some(keyword) = &cfg.filter_keyword {
        let chunks_path = cfg.out(CHUNKS_FILE);
        let chunk_texts: ChunkTexts = if chunks_path.exists() {
            jsonl::read::<Chunk>(&chunks_path)
                .map_err(|e| StageError::runtime(STAGE, e.to_string()))?
                .into_iter()
                .map(|c| (c.chunk_id, c.text))
                .collect()
        } else {
            ChunkTexts::new()
        };
        let tp_sel = filter_by_keyword(&tp.records, keyword, &chunk_texts)
            .map_err(|e| StageError::config(STAGE, e.to_string()))?;
        let tqa_sel =
            filter_by_keyword(&tqa, keyword, &chunk_texts).map_err(|e| StageError::config(STAGE, e.to_string()))?;
        let tp_name = format!("tp.{keyword}.jsonl");
        let tqa_name = format!("tqa.{keyword}.jsonl");
        write(&tp_name, jsonl::write(&cfg.out(&tp_name), &tp_sel))?;
        write(&tqa_name, jsonl::write(&cfg.out(&tqa_name), &tqa_sel))?;
        ctx.report(format_args!(
            "assemble: keyword {keyword:?} kept {} text and {} QA records",
            tp_sel.len(),
            tqa_sel.len()
        ));
    }
    ctx.report(format_args!(
        "assemble: {} text records, {} QA records, total {}",
        tp.records.len(),
        tqa.len(),
        stats.total
    ));
    Ok(ExitStatus::Success)
}

pub fn cmd_manifest(ctx: &Context) -> StageResult {
    const STAGE: &str = "manifest";
    let path = ctx.config.out(MANIFEST_FILE);
    if ctx.dry_run {
        let json = manifest_json(&ctx.config.train).map_err(|e| StageError::config(STAGE, e.to_string()))?;
        plan(STAGE, format!("write {}", path.display()));
        print!("{json}");
        return Ok(ExitStatus::Success);
    }
    write_manifest(&ctx.config.train, &path).map_err(|e| match e {
        crate::manifest::ManifestError::Invalid(_) => StageError::config(STAGE, e.to_string()),
        _ => StageError::runtime(STAGE, e.to_string()),
    })?;
    ctx.report(format_args!("manifest: wrote {}", path.display()));
    Ok(ExitStatus::Success)
}

/// Every stage in order; a configuration error stops the run.
pub fn cmd_pipeline(ctx: &Context) -> StageResult {
    type Stage = fn(&Context) -> StageResult;
    let stages: [(&str, Stage); 5] = [
        ("acquire", cmd_acquire),
        ("normalize", cmd_normalize),
        ("generate", cmd_generate),
        ("assemble", cmd_assemble),
        ("manifest", cmd_manifest),
    ];
    let mut worst = ExitStatus::Success;
    for (name, stage) in stages {
        log::info!(target: "pipeline", "stage {name}");
        let status = stage(ctx)?;
        worst = worst.max(status);
    }
    Ok(worst)
}

/// Counts from explicit maps, or from the assembled files when both are empty.
pub fn cmd_stats(ctx: &Context, tp: &[(Corpus, u64)], tqa: &[(Corpus, u64)]) -> StageResult {
    const STAGE: &str = "stats";
    let stats = if tp.is_empty() && tqa.is_empty() {
        stats_from_files(&ctx.config).map_err(|e| StageError::runtime(STAGE, e))?
    } else {
        let sum = |pairs: &[(Corpus, u64)]| {
            let mut m = BTreeMap::new();
            for (c, n) in pairs {
                *m.entry(*c).or_insert(0) += n;
            }
            m
        };
        compute_stats(&sum(tp), &sum(tqa))
    };
    print!("{}", jsonl::to_pretty(&stats));
    Ok(ExitStatus::Success)
}

fn stats_from_files(cfg: &PipelineConfig) -> Result<DatasetStats, String> {
    #[derive(serde::Deserialize)]
    struct CorpusOnly {
        corpus: Corpus,
    }
    let counts = |name: &str| -> Result<BTreeMap<Corpus, u64>, String> {
        let path = cfg.out(name);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let recs: Vec<CorpusOnly> = jsonl::read(&path).map_err(|e| e.to_string())?;
        Ok(count_by_corpus(&recs, |r| r.corpus))
    };
    Ok(compute_stats(&counts(TP_FILE)?, &counts(TQA_FILE)?))
}
