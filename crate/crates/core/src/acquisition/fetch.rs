use std::collections::VecDeque;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};
use std::thread;

use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::http::HttpClient;

use super::{AcquisitionError, FetchState, SourceManifest, SourceSpec};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Payload storage rooted at one directory: `<root>/<family>/<id>.<ext>`.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn payload_path(&self, spec: &SourceSpec) -> PathBuf {
        self.root
            .join(spec.family.as_str())
            .join(format!("{}.{}", spec.id, spec.expected_format.extension()))
    }

    fn write_payload(&self, spec: &SourceSpec, bytes: &[u8]) -> Result<PathBuf, AcquisitionError> {
        let path = self.payload_path(spec);
        let dir = path.parent().expect("payload path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| AcquisitionError::io(format!("create {}", dir.display()), e))?;
        let tmp = path.with_extension("part");
        std::fs::write(&tmp, bytes).map_err(|e| AcquisitionError::io(format!("write {}", tmp.display()), e))?;
        std::fs::rename(&tmp, &path).map_err(|e| AcquisitionError::io(format!("rename to {}", path.display()), e))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    /// Already fetched and the stored payload verified; nothing was done.
    Verified,
    /// Payload downloaded (or copied from a local path) and recorded.
    Fetched { hash: String, network: bool },
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FetchSummary {
    pub verified: usize,
    pub fetched: usize,
    pub failed: Vec<(String, String)>,
}

pub struct Fetcher {
    store: Store,
    client: HttpClient,
    concurrency: usize,
}

impl Fetcher {
    pub fn new(store: Store, client: HttpClient) -> Self {
        Self {
            store,
            client,
            concurrency: 4,
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Checks the stored payload of a fetched entry against its recorded hash.
    /// `Ok(false)` means the payload file is gone.
    pub fn verify(&self, manifest: &SourceManifest, id: &str) -> Result<bool, AcquisitionError> {
        let entry = manifest
            .get(id)
            .ok_or_else(|| AcquisitionError::UnknownId(id.to_string()))?;
        let expected = entry.content_hash.clone().unwrap_or_default();
        let path = self.store.payload_path(&entry.spec);
        match sha256_file(&path) {
            Ok(actual) if actual == expected => Ok(true),
            Ok(actual) => Err(AcquisitionError::ChecksumMismatch {
                id: id.to_string(),
                expected,
                actual,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(AcquisitionError::io(format!("read {}", path.display()), e)),
        }
    }

    /// Fetches one registered source and records the transition in `manifest`.
    /// Already-fetched entries are only verified.
    pub fn fetch_document(&self, manifest: &mut SourceManifest, id: &str) -> Result<FetchOutcome, AcquisitionError> {
        let entry = manifest
            .get(id)
            .ok_or_else(|| AcquisitionError::UnknownId(id.to_string()))?;
        if entry.fetch_state == FetchState::Fetched {
            if self.verify(manifest, id)? {
                return Ok(FetchOutcome::Verified);
            }
            log::warn!(target: "acquire", "payload of `{id}` is missing, fetching again");
            manifest.get_mut(id).unwrap().mark_pending();
        }
        let spec = manifest.get(id).unwrap().spec.clone();
        let result = self.retrieve(&spec);
        apply(manifest, id, result)
    }

    /// Fetches every entry that is not yet fetched, `concurrency` at a time.
    /// Manifest mutation stays on the calling thread; `persist` runs after
    /// every state transition.
    pub fn fetch_all<P>(&self, manifest: &mut SourceManifest, mut persist: P) -> Result<FetchSummary, AcquisitionError>
    where
        P: FnMut(&SourceManifest) -> Result<(), AcquisitionError>,
    {
        let mut summary = FetchSummary::default();
        let mut queue = VecDeque::new();
        let ids: Vec<String> = manifest.entries().iter().map(|e| e.spec.id.clone()).collect();
        for id in ids {
            let entry = manifest.get(&id).unwrap();
            if entry.fetch_state == FetchState::Fetched {
                match self.verify(manifest, &id) {
                    Ok(true) => {
                        summary.verified += 1;
                        continue;
                    }
                    Ok(false) => {
                        log::warn!(target: "acquire", "payload of `{id}` is missing, fetching again");
                        manifest.get_mut(&id).unwrap().mark_pending();
                        persist(manifest)?;
                    }
                    Err(e @ AcquisitionError::ChecksumMismatch { .. }) => {
                        log::error!(target: "acquire", "{e}");
                        summary.failed.push((id, e.to_string()));
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            queue.push_back(manifest.get(&id).unwrap().spec.clone());
        }
        if queue.is_empty() {
            return Ok(summary);
        }

        let workers = self.concurrency.min(queue.len());
        let queue = Mutex::new(queue);
        let (tx, rx) = mpsc::channel();
        thread::scope(|scope| -> Result<(), AcquisitionError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let queue = &queue;
                scope.spawn(move || loop {
                    let next = queue.lock().expect("queue poisoned").pop_front();
                    let Some(spec) = next else { break };
                    let result = self.retrieve(&spec);
                    if tx.send((spec.id, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (id, result) in rx {
                match apply(manifest, &id, result) {
                    Ok(_) => summary.fetched += 1,
                    Err(e) => {
                        log::error!(target: "acquire", "fetch `{id}` failed: {e}");
                        summary.failed.push((id, e.to_string()));
                    }
                }
                persist(manifest)?;
            }
            Ok(())
        })?;
        Ok(summary)
    }

    /// Obtains and stores the payload. Books are read from local paths only.
    fn retrieve(&self, spec: &SourceSpec) -> Result<(String, bool), AcquisitionError> {
        let (bytes, network) = if spec.is_remote() {
            if spec.family == Corpus::Books {
                return Err(AcquisitionError::BooksNotLocal(spec.id.clone()));
            }
            log::info!(target: "acquire", "GET {}", spec.locator);
            (self.client.get(&spec.locator)?, true)
        } else {
            let path = spec.locator.strip_prefix("file://").unwrap_or(&spec.locator);
            let bytes = std::fs::read(path).map_err(|e| AcquisitionError::io(format!("read {path}"), e))?;
            (bytes, false)
        };
        self.store.write_payload(spec, &bytes)?;
        Ok((sha256_hex(&bytes), network))
    }
}

fn apply(
    manifest: &mut SourceManifest,
    id: &str,
    result: Result<(String, bool), AcquisitionError>,
) -> Result<FetchOutcome, AcquisitionError> {
    let entry = manifest
        .get_mut(id)
        .ok_or_else(|| AcquisitionError::UnknownId(id.to_string()))?;
    match result {
        Ok((hash, network)) => {
            entry.mark_fetched(hash.clone(), now_rfc3339());
            Ok(FetchOutcome::Fetched { hash, network })
        }
        Err(e) => {
            entry.mark_failed(e.to_string());
            Err(e)
        }
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
