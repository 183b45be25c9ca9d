use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AcquisitionError, SourceSpec};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetchState {
    Pending,
    Fetched,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub spec: SourceSpec,
    pub fetch_state: FetchState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl ManifestEntry {
    pub fn pending(spec: SourceSpec) -> Self {
        Self {
            spec,
            fetch_state: FetchState::Pending,
            content_hash: None,
            fetched_at: None,
            last_error: None,
        }
    }

    pub(crate) fn mark_fetched(&mut self, hash: String, at: String) {
        self.fetch_state = FetchState::Fetched;
        self.content_hash = Some(hash);
        self.fetched_at = Some(at);
        self.last_error = None;
    }

    pub(crate) fn mark_failed(&mut self, error: String) {
        self.fetch_state = FetchState::Failed;
        self.content_hash = None;
        self.fetched_at = None;
        self.last_error = Some(error);
    }

    pub(crate) fn mark_pending(&mut self) {
        self.fetch_state = FetchState::Pending;
        self.content_hash = None;
        self.fetched_at = None;
    }
}

/// Persistent fetch state of every registered source, keyed by source id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceManifest {
    pub version: u32,
    entries: Vec<ManifestEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for SourceManifest {
    fn default() -> Self {
        Self::new()
    }
}

impl SourceManifest {
    pub fn new() -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Loads a manifest, or returns an empty one when `path` does not exist.
    pub fn load(path: &Path) -> Result<Self, AcquisitionError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(AcquisitionError::io(format!("read {}", path.display()), e)),
        };
        Self::from_json(&bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AcquisitionError> {
        let mut m: SourceManifest =
            serde_json::from_slice(bytes).map_err(|e| AcquisitionError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(AcquisitionError::Manifest(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        m.reindex()?;
        for e in &m.entries {
            if (e.fetch_state == FetchState::Fetched) != e.content_hash.is_some() {
                return Err(AcquisitionError::Manifest(format!(
                    "entry `{}`: content_hash must be present exactly when fetched",
                    e.spec.id
                )));
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes through a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, path: &Path) -> Result<(), AcquisitionError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AcquisitionError::io(format!("create {}", dir.display()), e))?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json())
            .map_err(|e| AcquisitionError::io(format!("write {}", tmp.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| AcquisitionError::io(format!("rename to {}", path.display()), e))
    }

    fn reindex(&mut self) -> Result<(), AcquisitionError> {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            if self.index.insert(e.spec.id.clone(), i).is_some() {
                return Err(AcquisitionError::Manifest(format!("duplicate entry `{}`", e.spec.id)));
            }
        }
        Ok(())
    }

    /// Adds a source as pending. Re-registering an identical spec is a no-op;
    /// a changed spec resets the entry so it is fetched again.
    /// Returns true when the manifest changed.
    pub fn register(&mut self, spec: SourceSpec) -> bool {
        match self.index.get(&spec.id) {
            Some(&i) if self.entries[i].spec == spec => false,
            Some(&i) => {
                self.entries[i] = ManifestEntry::pending(spec);
                true
            }
            None => {
                self.index.insert(spec.id.clone(), self.entries.len());
                self.entries.push(ManifestEntry::pending(spec));
                true
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub(crate) fn get_mut(&mut self, id: &str) -> Option<&mut ManifestEntry> {
        self.index.get(id).map(|&i| &mut self.entries[i])
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, state: FetchState) -> usize {
        self.entries.iter().filter(|e| e.fetch_state == state).count()
    }
}
