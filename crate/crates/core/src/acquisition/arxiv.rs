//! Category listings from the arXiv query API (Atom feed).

use crate::corpus::Corpus;
use crate::http::HttpClient;

use super::{AcquisitionError, ExpectedFormat, SourceSpec};

const ATOM_NS: &str = "http://www.w3.org/2005/Atom";
const OPENSEARCH_NS: &str = "http://a9.com/-/spec/opensearch/1.1/";

/// One `<entry>` of a listing page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingEntry {
    /// Version-less arXiv identifier, e.g. `2101.00001` or `physics/0101001`.
    pub arxiv_id: String,
    pub year: i32,
}

pub struct ArxivLister {
    client: HttpClient,
    api_base: String,
    eprint_base: String,
    page_size: usize,
}

impl ArxivLister {
    pub fn new(client: HttpClient) -> Self {
        Self {
            client,
            api_base: "https://export.arxiv.org/api/query".into(),
            eprint_base: "https://arxiv.org/e-print".into(),
            page_size: 500,
        }
    }

    pub fn with_endpoints(mut self, api_base: &str, eprint_base: &str) -> Self {
        self.api_base = api_base.trim_end_matches('/').to_string();
        self.eprint_base = eprint_base.trim_end_matches('/').to_string();
        self
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    /// Every article in `category` submitted in `from_year` or later, as
    /// LaTeX-archive sources pointing at the e-print endpoint.
    pub fn list_category(&self, category: &str, from_year: i32) -> Result<Vec<SourceSpec>, AcquisitionError> {
        if !valid_category(category) {
            return Err(AcquisitionError::InvalidCategory(category.to_string()));
        }
        if from_year < 1991 {
            return Err(AcquisitionError::InvalidYear(from_year));
        }
        let mut specs: Vec<SourceSpec> = Vec::new();
        let mut start = 0usize;
        loop {
            let url = format!(
                "{}?search_query=cat:{}&sortBy=submittedDate&sortOrder=descending&start={}&max_results={}",
                self.api_base, category, start, self.page_size
            );
            let body = self.client.get(&url)?;
            let text =
                String::from_utf8(body).map_err(|e| AcquisitionError::Listing(format!("listing is not UTF-8: {e}")))?;
            let (entries, total) = parse_listing(&text)?;
            if entries.is_empty() {
                break;
            }
            let page_len = entries.len();
            let mut reached_older = false;
            for entry in entries {
                if entry.year < from_year {
                    reached_older = true;
                    continue;
                }
                let id = entry.arxiv_id.replace('/', "_");
                if specs.iter().any(|s| s.id == id) {
                    continue;
                }
                specs.push(SourceSpec {
                    locator: format!("{}/{}", self.eprint_base, entry.arxiv_id),
                    id,
                    family: Corpus::Arxiv,
                    expected_format: ExpectedFormat::LatexArchive,
                });
            }
            start += page_len;
            // sorted newest first: once a page crosses from_year nothing later qualifies
            if reached_older || total.is_some_and(|t| start >= t) {
                break;
            }
        }
        Ok(specs)
    }
}

fn valid_category(c: &str) -> bool {
    let (archive, sub) = match c.split_once('.') {
        Some((a, s)) => (a, Some(s)),
        None => (c, None),
    };
    let archive_ok = !archive.is_empty() && archive.chars().all(|ch| ch.is_ascii_lowercase() || ch == '-');
    let sub_ok = sub.is_none_or(|s| !s.is_empty() && s.chars().all(|ch| ch.is_ascii_alphabetic() || ch == '-'));
    archive_ok && sub_ok
}

/// Parses one Atom listing page into entries and the advertised total.
pub fn parse_listing(xml: &str) -> Result<(Vec<ListingEntry>, Option<usize>), AcquisitionError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| AcquisitionError::Listing(e.to_string()))?;
    let root = doc.root_element();
    let total = root
        .children()
        .find(|n| n.has_tag_name((OPENSEARCH_NS, "totalResults")))
        .and_then(|n| n.text())
        .and_then(|t| t.trim().parse().ok());
    let mut entries = Vec::new();
    for entry in root.children().filter(|n| n.has_tag_name((ATOM_NS, "entry"))) {
        let child_text = |name: &str| {
            entry
                .children()
                .find(|n| n.has_tag_name((ATOM_NS, name)))
                .and_then(|n| n.text())
                .map(str::trim)
        };
        let Some(id_url) = child_text("id") else {
            return Err(AcquisitionError::Listing("entry without <id>".into()));
        };
        let published = child_text("published")
            .ok_or_else(|| AcquisitionError::Listing(format!("entry {id_url} without <published>")))?;
        let year = published
            .get(..4)
            .and_then(|y| y.parse::<i32>().ok())
            .ok_or_else(|| AcquisitionError::Listing(format!("bad date `{published}`")))?;
        entries.push(ListingEntry {
            arxiv_id: strip_version(abs_id(id_url)).to_string(),
            year,
        });
    }
    Ok((entries, total))
}

fn abs_id(url: &str) -> &str {
    url.split_once("/abs/").map(|(_, id)| id).unwrap_or(url)
}

fn strip_version(id: &str) -> &str {
    match id.rfind('v') {
        Some(pos)
            if pos + 1 < id.len()
                && pos > 0
                && id[pos + 1..].chars().all(|c| c.is_ascii_digit())
                && id[..pos].ends_with(|c: char| c.is_ascii_digit()) =>
        {
            &id[..pos]
        }
        _ => id,
    }
}
