use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three source families a corpus is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Arxiv,
    Jacow,
    Books,
}

impl Corpus {
    pub const ALL: [Corpus; 3] = [Corpus::Arxiv, Corpus::Jacow, Corpus::Books];

    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Arxiv => "arxiv",
            Corpus::Jacow => "jacow",
            Corpus::Books => "books",
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Corpus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arxiv" => Ok(Corpus::Arxiv),
            // proceedings are sometimes called the "papers" corpus
            "jacow" | "papers" => Ok(Corpus::Jacow),
            "books" | "book" => Ok(Corpus::Books),
            other => Err(format!("unknown corpus family `{other}`")),
        }
    }
}
