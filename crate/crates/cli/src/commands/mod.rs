//! Subcommand implementations.

pub mod corpus;
pub mod crowd;
pub mod eval;
pub mod llm;
pub mod lp;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use qaspect_core::corpus::{
    ingest_reviews, read_items, read_sentences, InputFormat, Item, Review,
};
use qaspect_core::PhaseId;

use crate::config::{pick, RunConfig};
use crate::manifest::RunDir;

/// Where a command's items come from.
#[derive(Debug, Clone, Default, Args)]
pub struct ItemArgs {
    /// Item file (JSON lines) as written by other commands.
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Review file; each review is one item (P1).
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    /// Sentence file; each sentence is one item (P2 onwards).
    #[arg(long)]
    pub sentences: Option<PathBuf>,
}

pub(crate) fn required<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing {what}; pass it as a flag or in the config file"))
}

pub(crate) fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    required(pick(&cfg.out, flag), "--out")
}

pub(crate) fn phase(cfg: &RunConfig, flag: Option<String>) -> Result<PhaseId> {
    let token = required(pick(&cfg.phase, flag), "--phase")?;
    token.parse().map_err(|e| anyhow!("{e}"))
}

pub(crate) fn infer_format(path: &Path) -> Result<InputFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(InputFormat::Delimited),
        Some("jsonl" | "ndjson" | "json") => Ok(InputFormat::RecordPerLine),
        _ => bail!("cannot tell the format of {}; pass --format", path.display()),
    }
}

/// Reviews in either input format; JSON lines are also what `ingest` writes.
pub(crate) fn load_reviews(path: &Path) -> Result<Vec<Review>> {
    let format = infer_format(path).unwrap_or(InputFormat::RecordPerLine);
    ingest_reviews(path, format).with_context(|| format!("reading reviews {}", path.display()))
}

/// Items for `phase`, recorded as inputs of the run.
pub(crate) fn load_items(cfg: &RunConfig, args: &ItemArgs, phase: PhaseId, run: &mut RunDir) -> Result<Vec<Item>> {
    if let Some(path) = pick(&cfg.items, args.items.clone()) {
        run.input(&path)?;
        let items = read_items(&path).with_context(|| format!("reading items {}", path.display()))?;
        return Ok(items.into_iter().map(|i| Item { phase, ..i }).collect());
    }
    if let Some(path) = pick(&cfg.sentences, args.sentences.clone()) {
        if phase == PhaseId::P1 {
            bail!("phase P1 classifies whole reviews; pass --reviews");
        }
        run.input(&path)?;
        let sentences = read_sentences(&path).with_context(|| format!("reading sentences {}", path.display()))?;
        return Ok(sentences.iter().map(|s| Item::from_sentence(s, phase)).collect());
    }
    if let Some(path) = pick(&cfg.reviews, args.reviews.clone()) {
        if phase != PhaseId::P1 {
            bail!("phase {phase} classifies sentences; pass --sentences or --items");
        }
        run.input(&path)?;
        return Ok(load_reviews(&path)?.iter().map(Item::from_review).collect());
    }
    bail!("no items given; pass --items, --sentences or --reviews")
}
