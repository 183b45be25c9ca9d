//! Corpus acquisition: source lists, the resumable fetch manifest, arXiv
//! category listing and content-addressed payload storage.

mod arxiv;
mod fetch;
mod manifest;
mod source_list;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::http::HttpError;

pub use arxiv::{parse_listing, ArxivLister, ListingEntry};
pub use fetch::{sha256_file, sha256_hex, FetchOutcome, FetchSummary, Fetcher, Store};
pub use manifest::{FetchState, ManifestEntry, SourceManifest, MANIFEST_VERSION};
pub use source_list::{load_source_list, parse_source_list};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("source list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate source id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited: gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("checksum mismatch for `{id}`: manifest {expected}, stored {actual}")]
    ChecksumMismatch {
        id: String,
        expected: String,
        actual: String,
    },
    #[error("`{0}` is not a valid archive category")]
    InvalidCategory(String),
    #[error("listing year {0} predates the archive (1991)")]
    InvalidYear(i32),
    #[error("books source `{0}` must be a local path")]
    BooksNotLocal(String),
    #[error("source `{0}` is not registered in the manifest")]
    UnknownId(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("malformed listing: {0}")]
    Listing(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl AcquisitionError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<HttpError> for AcquisitionError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::RateLimited { attempts, .. } => Self::RateLimited { attempts },
            HttpError::Network(m) => Self::Network(m),
            HttpError::Status { status, body } => {
                let mut body = body;
                body.truncate(200);
                Self::Network(format!("http status {status}: {body}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedFormat {
    LatexArchive,
    Pdf,
    Mmd,
}

impl ExpectedFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpectedFormat::LatexArchive => "latex_archive",
            ExpectedFormat::Pdf => "pdf",
            ExpectedFormat::Mmd => "mmd",
        }
    }

    /// File extension of stored payloads.
    pub fn extension(self) -> &'static str {
        match self {
            ExpectedFormat::LatexArchive => "eprint",
            ExpectedFormat::Pdf => "pdf",
            ExpectedFormat::Mmd => "mmd",
        }
    }

    pub fn allowed_for(self, family: Corpus) -> bool {
        matches!(
            (family, self),
            (Corpus::Arxiv, ExpectedFormat::LatexArchive | ExpectedFormat::Pdf)
                | (Corpus::Jacow, ExpectedFormat::Pdf | ExpectedFormat::Mmd)
                | (Corpus::Books, ExpectedFormat::Pdf | ExpectedFormat::Mmd)
        )
    }
}

impl fmt::Display for ExpectedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpectedFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latex_archive" => Ok(Self::LatexArchive),
            "pdf" => Ok(Self::Pdf),
            "mmd" => Ok(Self::Mmd),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// One corpus document to acquire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: String,
    pub family: Corpus,
    pub locator: String,
    pub expected_format: ExpectedFormat,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), String> {
        validate_id(&self.id)?;
        if self.locator.trim().is_empty() {
            return Err(format!("source `{}` has an empty locator", self.id));
        }
        if !self.expected_format.allowed_for(self.family) {
            return Err(format!(
                "format {} is not allowed for the {} family",
                self.expected_format, self.family
            ));
        }
        Ok(())
    }

    /// True when the locator names a network resource.
    pub fn is_remote(&self) -> bool {
        self.locator.starts_with("http://") || self.locator.starts_with("https://")
    }
}

/// Ids become file names in the store, so they must be path-safe.
pub fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("empty source id".into());
    }
    if id.starts_with('.') {
        return Err(format!("source id `{id}` may not start with '.'"));
    }
    if let Some(c) = id
        .chars()
        .find(|c| !(c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')))
    {
        return Err(format!("source id `{id}` contains invalid character {c:?}"));
    }
    Ok(())
}
