//! Bounded-concurrency generation with an append-only, resumable record log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use super::{
    build_prompt, parse_qa_response, parse_questions, AnswerTemplate, Endpoint, GenerationRecord, Outcome, ParseResult,
    PromptTemplate, QAPair, QaError,
};
use crate::chunker::Chunk;
use crate::jsonl;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum GenerationMode {
    /// Questions and answers come from one completion.
    #[default]
    OnePass,
    /// A question completion, then an answer completion over those questions.
    TwoPass(AnswerTemplate),
}

pub struct Generator {
    endpoint: Endpoint,
    template: PromptTemplate,
    mode: GenerationMode,
    concurrency: usize,
}

impl Generator {
    pub fn new(endpoint: Endpoint, template: PromptTemplate) -> Self {
        Self {
            endpoint,
            template,
            mode: GenerationMode::OnePass,
            concurrency: 2,
        }
    }

    pub fn with_mode(mut self, mode: GenerationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn run_chunk(&self, chunk: &Chunk) -> GenerationRecord {
        let started = Instant::now();
        let mut question_response = None;
        let result = match &self.mode {
            GenerationMode::OnePass => self
                .endpoint
                .request_generation(&build_prompt(&self.template, chunk))
                .map(Some),
            GenerationMode::TwoPass(answers) => self
                .endpoint
                .request_generation(&build_prompt(&self.template, chunk))
                .and_then(|qs| {
                    let questions = parse_questions(&qs);
                    question_response = Some(qs);
                    if questions.is_empty() {
                        return Ok(None);
                    }
                    self.endpoint
                        .request_generation(&answers.render(chunk, &questions))
                        .map(Some)
                }),
        };
        let (raw_response, outcome) = match result {
            Ok(None) => (
                String::new(),
                Outcome::Discarded {
                    reason: "no_questions_found".into(),
                },
            ),
            Ok(Some(raw)) => {
                let outcome = match parse_qa_response(&raw) {
                    ParseResult::Accepted { pairs, dropped } => Outcome::Accepted {
                        n_pairs: pairs.len(),
                        dropped,
                    },
                    ParseResult::Discard(reason) => Outcome::Discarded { reason },
                };
                (raw, outcome)
            }
            Err(e @ QaError::ContextOverflow { .. }) => (
                String::new(),
                Outcome::Discarded {
                    reason: format!("context_overflow: {e}"),
                },
            ),
            Err(e) => (String::new(), Outcome::Failed { error: e.to_string() }),
        };
        match &outcome {
            Outcome::Accepted { n_pairs, .. } => {
                log::debug!(target: "generate", "{}: accepted {n_pairs} pairs", chunk.chunk_id)
            }
            Outcome::Discarded { reason } => {
                log::info!(target: "generate", "{}: discarded ({reason})", chunk.chunk_id)
            }
            Outcome::Failed { error } => log::warn!(target: "generate", "{}: failed ({error})", chunk.chunk_id),
        }
        GenerationRecord {
            chunk_id: chunk.chunk_id.clone(),
            source_id: chunk.source_id.clone(),
            raw_response,
            question_response,
            outcome,
            endpoint_model: self.endpoint.config().model.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Accepted pairs in chunk order.
    pub pairs: Vec<QAPair>,
    /// One record per chunk, in chunk order.
    pub records: Vec<GenerationRecord>,
    /// Chunks sent to the endpoint in this run.
    pub requested: usize,
}

/// Generates for every chunk without a final record in `prior`.
/// `on_record` sees each new record in chunk order as soon as it and all
/// earlier ones are available, so a crash loses at most in-flight work.
pub fn generate_for_chunks<F>(
    generator: &Generator,
    chunks: &[Chunk],
    prior: &[GenerationRecord],
    mut on_record: F,
) -> Result<Generation, QaError>
where
    F: FnMut(&GenerationRecord) -> Result<(), QaError>,
{
    let mut done: HashMap<&str, &GenerationRecord> = HashMap::new();
    for r in prior.iter().filter(|r| r.outcome.is_final()) {
        done.insert(r.chunk_id.as_str(), r);
    }
    let pending: Vec<usize> = (0..chunks.len())
        .filter(|&i| !done.contains_key(chunks[i].chunk_id.as_str()))
        .collect();
    log::info!(
        target: "generate",
        "{} chunks, {} already done, {} to request",
        chunks.len(),
        chunks.len() - pending.len(),
        pending.len()
    );

    let mut fresh: HashMap<usize, GenerationRecord> = HashMap::new();
    let mut sink_error = None;
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, GenerationRecord)>();
    thread::scope(|scope| {
        for _ in 0..generator.concurrency.min(pending.len()) {
            let tx = tx.clone();
            let (next, abort, pending) = (&next, &abort, &pending);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let pos = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = pending.get(pos) else { break };
                if tx.send((pos, generator.run_chunk(&chunks[idx]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer: BTreeMap<usize, GenerationRecord> = BTreeMap::new();
        let mut emit_pos = 0;
        for (pos, record) in rx {
            buffer.insert(pos, record);
            while let Some(record) = buffer.remove(&emit_pos) {
                if sink_error.is_none() {
                    if let Err(e) = on_record(&record) {
                        abort.store(true, Ordering::SeqCst);
                        sink_error = Some(e);
                    }
                }
                fresh.insert(pending[emit_pos], record);
                emit_pos += 1;
            }
        }
    });
    if let Some(e) = sink_error {
        return Err(e);
    }

    let records: Vec<GenerationRecord> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| match fresh.remove(&i) {
            Some(r) => r,
            None => (*done[c.chunk_id.as_str()]).clone(),
        })
        .collect();
    Ok(Generation {
        pairs: pairs_from_records(&records),
        requested: pending.len(),
        records,
    })
}

/// Pairs of accepted records, re-derived from the stored raw responses.
pub fn pairs_from_records(records: &[GenerationRecord]) -> Vec<QAPair> {
    records
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Accepted { .. }))
        .flat_map(|r| {
            parse_qa_response(&r.raw_response)
                .pairs()
                .iter()
                .map(|p| QAPair {
                    question: p.question.clone(),
                    answer: p.answer.clone(),
                    chunk_id: r.chunk_id.clone(),
                    source_id: r.source_id.clone(),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Reads a record log, ignoring a torn final line left by an interrupted run.
pub fn load_records(path: &Path) -> Result<Vec<GenerationRecord>, QaError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(log_error(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(p) => &text[..=p],
        None => "",
    };
    if complete.len() != text.len() {
        log::warn!(target: "generate", "{}: ignoring incomplete final line", path.display());
    }
    jsonl::parse(complete, &path.display().to_string()).map_err(|e| QaError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Append-only writer for `qa_raw.jsonl`; each record is flushed on write.
pub struct RecordLog {
    path: PathBuf,
    file: File,
}

impl RecordLog {
    /// Opens for append after cutting any torn final line.
    pub fn open(path: &Path) -> Result<Self, QaError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| log_error(path, e))?;
        }
        if let Ok(bytes) = fs::read(path) {
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            if keep != bytes.len() {
                fs::write(path, &bytes[..keep]).map_err(|e| log_error(path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| log_error(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &GenerationRecord) -> Result<(), QaError> {
        let mut line = jsonl::to_line(record);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| log_error(&self.path, e))
    }
}

fn log_error(path: &Path, e: std::io::Error) -> QaError {
    QaError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes records as JSON Lines with sorted keys, replacing the file.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), QaError> {
    jsonl::write(path, records).map_err(|e| QaError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
