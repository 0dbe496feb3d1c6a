//! Command-line driver. Every command writes into a fresh run directory with
//! a manifest of its inputs, parameters and outputs.

pub mod commands;
pub mod config;
pub mod live;
pub mod manifest;
pub mod prompts;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "qaspect", version, about = "Classify app reviews into quality aspects and score the results")]
pub struct Cli {
    /// TOML run configuration; its values override the matching flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read reviews from CSV or JSON lines into reviews.jsonl.
    Ingest(commands::corpus::IngestArgs),
    /// Split reviews into sentences.
    Split(commands::corpus::SplitArgs),
    /// Draw a stratified sample of reviews over (app, store).
    Sample(commands::corpus::SampleArgs),
    /// Match a pattern catalog against items.
    LpRun(commands::lp::LpRunArgs),
    /// Precision vetting of patterns.
    LpVet(commands::lp::LpVetArgs),
    /// Classify items with one or more LLM conditions.
    LlmRun(commands::llm::LlmRunArgs),
    /// Run the crowd annotation server.
    Serve(commands::crowd::ServeArgs),
    /// Majority vote over judgments, or an ensemble over conditions.
    Aggregate(commands::eval::AggregateArgs),
    /// Combine P3 and P4 predictions into the P3prime label space.
    Compose(commands::eval::ComposeArgs),
    /// Score predictions against gold.
    Score(commands::eval::ScoreArgs),
    /// Compare several prediction sets: metrics table, ROC points, gold distribution.
    Report(commands::eval::ReportArgs),
}

pub fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    use Command::*;
    match cli.command {
        Ingest(a) => commands::corpus::ingest(&cfg, a),
        Split(a) => commands::corpus::split(&cfg, a),
        Sample(a) => commands::corpus::sample(&cfg, a),
        LpRun(a) => commands::lp::run(&cfg, a),
        LpVet(a) => commands::lp::vet(&cfg, a),
        LlmRun(a) => commands::llm::run(&cfg, a),
        Serve(a) => commands::crowd::serve(&cfg, a),
        Aggregate(a) => commands::eval::aggregate(&cfg, a),
        Compose(a) => commands::eval::compose(&cfg, a),
        Score(a) => commands::eval::score(&cfg, a),
        Report(a) => commands::eval::report(&cfg, a),
    }
}
