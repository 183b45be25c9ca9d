//! Command-line front end. Every stage reads and writes files under the
//! store and output directories, so stages can be run one at a time.

mod config;
mod eprint;
mod stages;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{AcquireSettings, GenerateSettings, Overrides, PipelineConfig};
pub use eprint::extract_main_tex;
pub use stages::{
    cmd_acquire, cmd_assemble, cmd_generate, cmd_manifest, cmd_normalize, cmd_pipeline, cmd_stats, Context, ExitStatus,
    StageError, StageResult, CHUNKS_FILE, QA_PAIRS_FILE, QA_RAW_FILE, STATS_FILE, TP_FILE, TQA_FILE, WARNINGS_FILE,
};

use crate::Corpus;

#[derive(Debug, Parser)]
#[command(
    name = "corpusforge",
    version,
    about = "Build fine-tuning corpora from scientific publications"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory holding fetched payloads and manifest.json.
    #[arg(long, global = true, env = "CORPUSFORGE_STORE", value_name = "DIR")]
    pub store: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Print the planned work without network calls or writes.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// More log output (-v info for all targets, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Errors only, no stage summaries.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch the sources of a source list and listed arXiv categories.
    Acquire {
        #[arg(long, value_name = "FILE")]
        sources: Option<PathBuf>,
    },
    /// Convert fetched payloads to canonical Markdown.
    Normalize,
    /// Chunk canonical documents and generate question-answer pairs.
    Generate {
        #[command(flatten)]
        chunk: ChunkArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Write tp.jsonl, tqa.jsonl and stats.json.
    Assemble {
        #[command(flatten)]
        chunk: ChunkArgs,
        #[arg(long, value_name = "KEYWORD")]
        filter_keyword: Option<String>,
    },
    /// Write train_manifest.json.
    Manifest,
    /// Run every stage in order.
    Pipeline {
        #[arg(long, value_name = "FILE")]
        sources: Option<PathBuf>,
        #[command(flatten)]
        chunk: ChunkArgs,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, value_name = "KEYWORD")]
        filter_keyword: Option<String>,
    },
    /// Print dataset counts, from `corpus=n` arguments or the assembled files.
    Stats {
        #[arg(long = "tp-count", value_name = "CORPUS=N", value_parser = parse_count)]
        tp: Vec<(Corpus, u64)>,
        #[arg(long = "tqa-count", value_name = "CORPUS=N", value_parser = parse_count)]
        tqa: Vec<(Corpus, u64)>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ChunkArgs {
    /// Token budget per chunk.
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LlmArgs {
    /// Base URL of the OpenAI-compatible endpoint.
    #[arg(long, env = "CORPUSFORGE_LLM_URL", value_name = "URL")]
    pub llm_url: Option<String>,
    #[arg(long, env = "CORPUSFORGE_LLM_KEY", hide_env_values = true, hide = true)]
    pub llm_key: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Concurrent generation requests.
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
    /// Ask for questions first, then answers in a second request.
    #[arg(long)]
    pub two_pass: bool,
}

fn parse_count(s: &str) -> Result<(Corpus, u64), String> {
    let (corpus, n) = s
        .split_once('=')
        .ok_or_else(|| format!("expected CORPUS=N, got `{s}`"))?;
    let n = n.trim().parse().map_err(|e| format!("count `{n}`: {e}"))?;
    Ok((corpus.trim().parse()?, n))
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            store: self.store.clone(),
            output_dir: self.output_dir.clone(),
            ..Overrides::default()
        };
        let mut llm = |l: &LlmArgs| {
            o.llm_url = l.llm_url.clone();
            o.llm_key = l.llm_key.clone();
            o.model = l.model.clone();
            o.concurrency = l.concurrency;
            o.two_pass = l.two_pass;
        };
        match &self.command {
            Command::Generate { llm: l, .. } | Command::Pipeline { llm: l, .. } => llm(l),
            _ => {}
        }
        match &self.command {
            Command::Acquire { sources } => o.sources = sources.clone(),
            Command::Generate { chunk, .. } => o.max_tokens = chunk.max_tokens,
            Command::Assemble { chunk, filter_keyword } => {
                o.max_tokens = chunk.max_tokens;
                o.filter_keyword = filter_keyword.clone();
            }
            Command::Pipeline {
                sources,
                chunk,
                filter_keyword,
                ..
            } => {
                o.sources = sources.clone();
                o.max_tokens = chunk.max_tokens;
                o.filter_keyword = filter_keyword.clone();
            }
            Command::Normalize | Command::Manifest | Command::Stats { .. } => {}
        }
        o
    }

    fn stage(&self) -> &'static str {
        match self.command {
            Command::Acquire { .. } => "acquire",
            Command::Normalize => "normalize",
            Command::Generate { .. } => "generate",
            Command::Assemble { .. } => "assemble",
            Command::Manifest => "manifest",
            Command::Pipeline { .. } => "pipeline",
            Command::Stats { .. } => "stats",
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => ExitStatus::Config.code(),
            };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let status = run(&cli).unwrap_or_else(|e| {
        eprintln!("{e}");
        e.status
    });
    status.code()
}

pub fn run(cli: &Cli) -> StageResult {
    let config = PipelineConfig::load(cli.config.as_deref(), &cli.overrides())
        .map_err(|m| StageError::config(cli.stage(), m))?;
    let ctx = Context::new(config, cli.dry_run).quiet(cli.quiet);
    match &cli.command {
        Command::Acquire { .. } => cmd_acquire(&ctx),
        Command::Normalize => cmd_normalize(&ctx),
        Command::Generate { .. } => cmd_generate(&ctx),
        Command::Assemble { .. } => cmd_assemble(&ctx),
        Command::Manifest => cmd_manifest(&ctx),
        Command::Pipeline { .. } => cmd_pipeline(&ctx),
        Command::Stats { tp, tqa } => cmd_stats(&ctx, tp, tqa),
    }
}

const STAGE_TARGETS: [&str; 7] = [
    "acquire",
    "normalize",
    "generate",
    "assemble",
    "manifest",
    "pipeline",
    "http",
];

/// `<timestamp> stage=<target> level=<level> msg=<text>` on stderr.
/// `RUST_LOG` takes precedence over the verbosity flags.
pub fn init_logging(verbose: u8, quiet: bool) {
    let mut builder = env_logger::Builder::new();
    if quiet {
        builder.filter_level(log::LevelFilter::Error);
    } else {
        builder.filter_level(if verbose >= 1 {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        });
        let stage_level = if verbose >= 2 {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Info
        };
        for target in STAGE_TARGETS {
            builder.filter_module(target, stage_level);
        }
    }
    if let Ok(spec) = std::env::var("RUST_LOG") {
        builder.parse_filters(&spec);
    }
    builder.format(|buf, record| {
        writeln!(
            buf,
            "{} stage={} level={} msg={}",
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            record.target(),
            record.level().as_str().to_lowercase(),
            record.args()
        )
    });
    let _ = builder.try_init();
}
