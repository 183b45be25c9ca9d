//! Pipeline configuration: TOML file overridden by environment and flags.
//!
//! ```toml
//! store = "store"
//! sources = "sources.txt"
//! output_dir = "out"
//! max_tokens = 12000
//! filter_keyword = "DESY"
//!
//! [acquire]
//! concurrency = 4
//! min_interval_secs = 3.0
//! arxiv_categories = ["physics.acc-ph"]
//! arxiv_from_year = 2015
//!
//! [endpoint]
//! base_url = "http://127.0.0.1:8000/v1"
//! model = "vicuna-7b-16k-v1.5"
//!
//! [generate]
//! concurrency = 2
//! two_pass = false
//!
//! [train]
//! epochs = 4
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::chunker::DEFAULT_MAX_TOKENS;
use crate::manifest::TrainConfig;
use crate::qagen::EndpointConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquireSettings {
    pub concurrency: usize,
    /// Minimum spacing of requests to one host.
    pub min_interval_secs: f64,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    pub arxiv_categories: Vec<String>,
    pub arxiv_from_year: i32,
    pub arxiv_api: Option<String>,
    pub arxiv_eprint_base: Option<String>,
}

impl Default for AcquireSettings {
    fn default() -> Self {
        Self {
            concurrency: 4,
            min_interval_secs: 3.0,
            max_attempts: 5,
            timeout_secs: 120,
            arxiv_categories: Vec::new(),
            arxiv_from_year: 2015,
            arxiv_api: None,
            arxiv_eprint_base: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    pub concurrency: usize,
    pub two_pass: bool,
    pub template_file: Option<PathBuf>,
    pub answer_template_file: Option<PathBuf>,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self {
            concurrency: 2,
            two_pass: false,
            template_file: None,
            answer_template_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub store: PathBuf,
    pub sources: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub max_tokens: usize,
    pub filter_keyword: Option<String>,
    pub acquire: AcquireSettings,
    pub endpoint: EndpointConfig,
    pub generate: GenerateSettings,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            store: PathBuf::from("store"),
            sources: None,
            output_dir: PathBuf::from("out"),
            max_tokens: DEFAULT_MAX_TOKENS,
            filter_keyword: None,
            acquire: AcquireSettings::default(),
            endpoint: EndpointConfig::default(),
            generate: GenerateSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Flag values that override the file and the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub store: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    pub max_tokens: Option<usize>,
    pub filter_keyword: Option<String>,
    pub llm_url: Option<String>,
    pub model: Option<String>,
    pub concurrency: Option<usize>,
    pub two_pass: bool,
    pub llm_key: Option<String>,
}

impl PipelineConfig {
    /// Flags (which carry the environment through clap) override the file.
    pub fn load(file: Option<&Path>, flags: &Overrides) -> Result<Self, String> {
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let mut c: PipelineConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                c.resolve_relative(path.parent().unwrap_or(Path::new(".")));
                c
            }
            None => PipelineConfig::default(),
        };
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store);
        fix(&mut self.output_dir);
        if let Some(s) = &mut self.sources {
            fix(s);
        }
        if let Some(t) = &mut self.generate.template_file {
            fix(t);
        }
        if let Some(t) = &mut self.generate.answer_template_file {
            fix(t);
        }
    }

    fn apply(&mut self, flags: &Overrides) {
        if let Some(s) = &flags.store {
            self.store = s.clone();
        }
        if let Some(o) = &flags.output_dir {
            self.output_dir = o.clone();
        }
        if let Some(s) = &flags.sources {
            self.sources = Some(s.clone());
        }
        if let Some(m) = flags.max_tokens {
            self.max_tokens = m;
        }
        if let Some(k) = &flags.filter_keyword {
            self.filter_keyword = Some(k.clone());
        }
        if let Some(u) = &flags.llm_url {
            self.endpoint.base_url = u.clone();
        }
        if let Some(m) = &flags.model {
            self.endpoint.model = m.clone();
        }
        if let Some(c) = flags.concurrency {
            self.generate.concurrency = c;
        }
        if flags.llm_key.is_some() {
            self.endpoint.api_key = flags.llm_key.clone();
        }
        if flags.two_pass {
            self.generate.two_pass = true;
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if let Some(k) = &self.filter_keyword {
            if k.is_empty() || k.contains(['/', '\\']) || k.starts_with('.') {
                return Err(format!("filter keyword `{k}` cannot be used in a file name"));
            }
        }
        if self.acquire.min_interval_secs < 0.0 || !self.acquire.min_interval_secs.is_finite() {
            return Err("acquire.min_interval_secs must be a non-negative number".into());
        }
        self.train.validate().map_err(|e| e.to_string())
    }

    pub fn canonical_dir(&self) -> PathBuf {
        self.output_dir.join("canonical")
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
