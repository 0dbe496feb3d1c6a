use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::Args;

use qaspect_core::crowd::{default_job, CrowdConfig, CrowdService, JobDescription, JudgmentStore, TestQuestion};
use qaspect_core::io::read_jsonl;
use qaspect_core::llm::SystemClock;

use super::{load_items, out_dir, phase, required, ItemArgs};
use crate::config::{pick, RunConfig};
use crate::manifest::RunDir;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub phase: Option<String>,
    #[command(flatten)]
    pub items: ItemArgs,
    /// Test questions, one `{"item": ..., "expected": [...]}` per line.
    #[arg(long)]
    pub tests: PathBuf,
    /// Judgment store directory; defaults to `<out>/store`. Reusing a store
    /// resumes its judgments and worker states.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Directory of job descriptions named `<phase>.txt`.
    #[arg(long)]
    pub jobs: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum quiz and running test accuracy.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn serve(cfg: &RunConfig, a: ServeArgs) -> Result<PathBuf> {
    let phase = phase(cfg, a.phase.clone())?;
    let seed = required(pick(&cfg.seed, a.seed), "--seed")?;
    let threshold = pick(&cfg.threshold, a.threshold).unwrap_or(CrowdConfig::default().eligibility_threshold);
    if !(0.0..=1.0).contains(&threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    let mut run = RunDir::create(&out_dir(cfg, a.out.clone())?, "serve")?;
    run.seed(seed);
    run.param("phase", phase);
    run.param("threshold", threshold);
    run.param("addr", &a.addr);
    let items = load_items(cfg, &a.items, phase, &mut run)?;
    run.input(&a.tests)?;
    let tests: Vec<TestQuestion> = read_jsonl(&a.tests)?.into_iter().map(|(_, t)| t).collect();
    let job = match &a.jobs {
        Some(dir) => JobDescription::load(dir, phase)?,
        None => default_job(phase),
    };
    let store_dir = a.store.clone().unwrap_or_else(|| run.root.join("store"));
    run.param("store", store_dir.display());
    let store = JudgmentStore::open(&store_dir)?;
    let config = CrowdConfig {
        eligibility_threshold: threshold,
        ..CrowdConfig::default()
    };
    let svc = CrowdService::new(config, store, seed, Box::new(SystemClock));
    log::info!("phase {phase}: {} items, {} test questions", items.len(), tests.len());
    svc.add_phase(phase, items, tests, job);
    let root = run.finish()?;
    qaspect_server::serve_blocking(&a.addr, Arc::new(svc))?;
    Ok(root)
}
