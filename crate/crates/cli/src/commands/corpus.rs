use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};

use qaspect_core::corpus::{
    ingest_reviews, sample_stratified, split_sentences, write_reviews, write_sentences, InputFormat,
};

use super::{infer_format, load_reviews, out_dir, required};
use crate::config::{pick, RunConfig};
use crate::manifest::RunDir;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the file extension.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ingest(cfg: &RunConfig, a: IngestArgs) -> Result<PathBuf> {
    let format = match a.format {
        Some(Format::Csv) => InputFormat::Delimited,
        Some(Format::Jsonl) => InputFormat::RecordPerLine,
        None => infer_format(&a.input)?,
    };
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "ingest")?;
    run.input(&a.input)?;
    let reviews = ingest_reviews(&a.input, format)?;
    run.param("reviews", reviews.len());
    write_reviews(&run.output("reviews.jsonl"), &reviews)?;
    log::info!("ingested {} reviews", reviews.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn split(cfg: &RunConfig, a: SplitArgs) -> Result<PathBuf> {
    let input = required(pick(&cfg.reviews, a.reviews), "--reviews")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "split")?;
    run.input(&input)?;
    let reviews = load_reviews(&input)?;
    let sentences: Vec<_> = reviews.iter().flat_map(split_sentences).collect();
    run.param("reviews", reviews.len());
    run.param("sentences", sentences.len());
    write_sentences(&run.output("sentences.jsonl"), &sentences)?;
    log::info!("{} reviews -> {} sentences", reviews.len(), sentences.len());
    run.finish()
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sample(cfg: &RunConfig, a: SampleArgs) -> Result<PathBuf> {
    let input = required(pick(&cfg.reviews, a.reviews), "--reviews")?;
    let seed = required(pick(&cfg.seed, a.seed), "--seed")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "sample")?;
    run.input(&input)?;
    run.seed(seed);
    run.param("n", a.n);
    let reviews = load_reviews(&input)?;
    if a.n > reviews.len() {
        bail!("cannot sample {} of {} reviews", a.n, reviews.len());
    }
    let picked = sample_stratified(&reviews, a.n, |r| r.stratum(), seed)?;
    write_reviews(&run.output("reviews.jsonl"), &picked)?;
    run.finish()
}
