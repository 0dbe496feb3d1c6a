use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use qaspect_core::judgments::{write_judgments, JudgmentRecord};
use qaspect_core::llm::{
    make_batches_sized, parse_raw, run_condition, to_judgment_records, AlignmentReport, BatchStatus,
    Clock, Condition, LineError, LogicalClock, NoSleep, Provider, RawStore, RecordingProvider,
    ReplayProvider, RetryPolicy, RunContext, Sleeper, SystemClock, ThreadSleeper, BATCH_SIZE,
};
use qaspect_core::PhaseId;

use super::{load_items, out_dir, phase, required, ItemArgs};
use crate::config::{pick, ProviderMode, RunConfig};
use crate::live::{ChatCompletions, DEFAULT_BASE_URL, DEFAULT_KEY_ENV};
use crate::manifest::RunDir;
use crate::prompts;

#[derive(Debug, Args)]
pub struct LlmRunArgs {
    /// Condition such as `Kyo,Few,4o`; repeatable.
    #[arg(long = "condition")]
    pub conditions: Vec<String>,
    /// Run all eight prompt-type x learning x model combinations.
    #[arg(long, conflicts_with = "conditions")]
    pub all_conditions: bool,
    /// The two models crossed by --all-conditions.
    #[arg(long, value_delimiter = ',', default_value = "gpt-4,gpt-4o")]
    pub models: Vec<String>,
    #[arg(long)]
    pub phase: Option<String>,
    #[command(flatten)]
    pub items: ItemArgs,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderMode>,
    /// Replay fixture directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Live mode: also save every response as a replay fixture here.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BatchIssues {
    batch: usize,
    errors: Vec<LineError>,
    alignment: AlignmentReport,
}

#[derive(Debug, Serialize)]
struct ConditionReport {
    condition: String,
    batches: usize,
    failed_batches: Vec<usize>,
    judgments: usize,
    /// Only batches with line errors or alignment problems.
    issues: Vec<BatchIssues>,
}

fn conditions(cfg: &RunConfig, a: &LlmRunArgs) -> Result<Vec<Condition>> {
    if a.all_conditions && cfg.conditions.is_empty() {
        let [m1, m2] = a.models.as_slice() else {
            bail!("--models takes exactly two models");
        };
        return Ok(Condition::factorial([m1, m2]));
    }
    let names = if cfg.conditions.is_empty() { &a.conditions } else { &cfg.conditions };
    if names.is_empty() {
        bail!("no conditions; pass --condition or --all-conditions");
    }
    names
        .iter()
        .map(|n| n.parse::<Condition>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn provider(cfg: &RunConfig, a: &LlmRunArgs, mode: ProviderMode, run: &mut RunDir) -> Result<Box<dyn Provider>> {
    Ok(match mode {
        ProviderMode::Replay => {
            let dir = required(pick(&cfg.fixtures, a.fixtures.clone()), "--fixtures")?;
            run.param("fixtures", dir.display());
            Box::new(ReplayProvider::new(dir))
        }
        ProviderMode::Live => {
            let base = pick(&cfg.base_url, a.base_url.clone()).unwrap_or_else(|| DEFAULT_BASE_URL.into());
            let var = pick(&cfg.api_key_env, a.api_key_env.clone()).unwrap_or_else(|| DEFAULT_KEY_ENV.into());
            run.param("base_url", &base);
            let live = ChatCompletions::from_env(&base, &var)?;
            match &a.record {
                Some(dir) => {
                    run.param("record", dir.display());
                    Box::new(RecordingProvider::new(live, dir))
                }
                None => Box::new(live),
            }
        }
    })
}

pub fn run(cfg: &RunConfig, a: LlmRunArgs) -> Result<PathBuf> {
    let conds = conditions(cfg, &a)?;
    let phase = phase(cfg, a.phase.clone())?;
    if !matches!(phase, PhaseId::P1 | PhaseId::P2 | PhaseId::P3Prime) {
        bail!("LLM conditions run on P1, P2 and P3prime, not {phase}");
    }
    let mode = required(pick(&cfg.provider, a.provider), "--provider")?;
    let batch_size = pick(&cfg.batch_size, a.batch_size).unwrap_or(BATCH_SIZE);
    if batch_size == 0 {
        bail!("--batch-size must be positive");
    }
    let templates = pick(&cfg.templates, a.templates.clone());

    let mut run = RunDir::create(&out_dir(cfg, a.out.clone())?, "llm-run")?;
    run.param("phase", phase);
    run.param("provider", format!("{mode:?}").to_lowercase());
    run.param("batch_size", batch_size);
    run.param("conditions", conds.iter().map(Condition::name).collect::<Vec<_>>().join(" "));
    if let Some(dir) = &templates {
        run.param("templates", dir.display());
    }
    let items = load_items(cfg, &a.items, phase, &mut run)?;
    let provider = provider(cfg, &a, mode, &mut run)?;
    let store = RawStore::new(run.root.join("raw"));

    let results: Vec<Result<(Vec<JudgmentRecord>, ConditionReport, Vec<usize>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = conds
            .iter()
            .map(|c| {
                let (provider, store, items, templates) = (&provider, &store, &items, &templates);
                s.spawn(move || -> Result<_> {
                    let template = prompts::load(templates.as_deref(), phase, c.prompt_type, c.learning)?;
                    let batches = make_batches_sized(items, phase, c, batch_size);
                    let (clock, sleeper): (Box<dyn Clock>, Box<dyn Sleeper>) = match mode {
                        ProviderMode::Replay => (Box::new(LogicalClock::new()), Box::new(NoSleep::default())),
                        ProviderMode::Live => (Box::new(SystemClock), Box::new(ThreadSleeper)),
                    };
                    let ctx = RunContext {
                        provider: provider.as_ref(),
                        clock: clock.as_ref(),
                        sleeper: sleeper.as_ref(),
                        retry: RetryPolicy::default(),
                        store,
                    };
                    let raws = run_condition(&template, &batches, &ctx).with_context(|| format!("condition {c}"))?;
                    let mut records = Vec::new();
                    let mut issues = Vec::new();
                    for (ordinal, outcome) in parse_raw(&raws, &batches) {
                        let at = raws.iter().find(|r| r.batch == ordinal).map_or(0, |r| r.finished_at);
                        records.extend(to_judgment_records(&outcome.judgments, &c.name(), phase, at));
                        if !outcome.errors.is_empty() || !outcome.alignment.is_clean() {
                            issues.push(BatchIssues {
                                batch: ordinal,
                                errors: outcome.errors,
                                alignment: outcome.alignment,
                            });
                        }
                    }
                    let report = ConditionReport {
                        condition: c.name(),
                        batches: raws.len(),
                        failed_batches: raws
                            .iter()
                            .filter(|r| r.status == BatchStatus::Failed)
                            .map(|r| r.batch)
                            .collect(),
                        judgments: records.len(),
                        issues,
                    };
                    Ok((records, report, raws.iter().map(|r| r.batch).collect()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("condition thread panicked")).collect()
    });

    let mut all = Vec::new();
    let mut reports = Vec::new();
    for (c, res) in conds.iter().zip(results) {
        let (records, report, batches) = res?;
        log::info!(
            "{c}: {} batches, {} judgments, {} failed",
            report.batches,
            report.judgments,
            report.failed_batches.len()
        );
        for b in batches {
            run.output(&format!("raw/{}/{}/batch-{b:03}.json", c.slug(), phase.token()));
        }
        all.extend(records);
        reports.push(report);
    }
    write_judgments(&run.output("judgments.jsonl"), &all)?;
    run.write_json("parse-report.json", &reports)?;
    run.finish()
}
