use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use qaspect_core::corpus::read_sentences;
use qaspect_core::io::{read_jsonl, write_jsonl};
use qaspect_core::lp::{
    classify_matches, default_mapping, match_item, micro_precision, prune_catalog, read_catalog,
    read_match_report, record_vetting, sample_matches, write_catalog, write_match_report, Catalog,
    LpStatus, MatchResult, Selection, Verdict, VettingLedger,
};
use qaspect_core::phases::write_predictions;
use qaspect_core::PhaseId;

use super::{load_items, load_reviews, out_dir, required, ItemArgs};
use crate::config::{pick, RunConfig};
use crate::manifest::RunDir;

#[derive(Debug, Args)]
pub struct LpRunArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub items: ItemArgs,
    /// Use the pattern set as it stood after this vetting round instead of
    /// the stored status.
    #[arg(long)]
    pub round: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cfg: &RunConfig, a: LpRunArgs) -> Result<PathBuf> {
    let catalog_path = required(pick(&cfg.catalog, a.catalog), "--catalog")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "lp-run")?;
    run.input(&catalog_path)?;
    let mut catalog = Catalog::load(&catalog_path)?;
    if let Some(r) = a.round {
        run.param("round", r);
        catalog = catalog.with_selection(Selection::AsOfRound(r));
    }
    run.param("active_patterns", catalog.active().count());
    let items = load_items(cfg, &a.items, PhaseId::P3Prime, &mut run)?;
    let mapping = default_mapping();
    let mut matches = Vec::new();
    let mut preds = Vec::with_capacity(items.len());
    for item in &items {
        let hits = match_item(&catalog, item);
        preds.push(classify_matches(&catalog, &item.id, &hits, &mapping)?);
        matches.extend(hits);
    }
    run.param("items", items.len());
    run.param("matches", matches.len());
    write_match_report(&run.output("matches.jsonl"), &matches)?;
    write_predictions(&run.output("predictions.jsonl"), &preds)?;
    run.finish()
}

#[derive(Debug, Args)]
pub struct LpVetArgs {
    #[command(subcommand)]
    pub step: VetStep,
}

#[derive(Debug, Subcommand)]
pub enum VetStep {
    /// Pick the matches to judge for each pattern and write a vetting sheet.
    Sample(VetSampleArgs),
    /// Turn a filled-in vetting sheet into ledger records.
    Record(VetRecordArgs),
    /// Apply one round of ledger records to the catalog.
    Prune(VetPruneArgs),
}

/// One row of a vetting sheet; `verdict` is filled in by the reviewer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SheetRow {
    pub lp_id: String,
    pub round: u32,
    pub item_id: String,
    pub matched_text: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Args)]
pub struct VetSampleArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// matches.jsonl from lp-run.
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub round: u32,
    #[arg(long, default_value_t = 100)]
    pub cap: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// With --reviews, samples are stratified over each sentence's (app, store).
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VetRecordArgs {
    #[arg(long)]
    pub sheet: PathBuf,
    /// Earlier ledger to extend; it is copied, never modified.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VetPruneArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long)]
    pub round: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn vet(cfg: &RunConfig, a: LpVetArgs) -> Result<PathBuf> {
    match a.step {
        VetStep::Sample(a) => vet_sample(cfg, a),
        VetStep::Record(a) => vet_record(cfg, a),
        VetStep::Prune(a) => vet_prune(cfg, a),
    }
}

fn vet_sample(cfg: &RunConfig, a: VetSampleArgs) -> Result<PathBuf> {
    let catalog_path = required(pick(&cfg.catalog, a.catalog), "--catalog")?;
    let seed = required(pick(&cfg.seed, a.seed), "--seed")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "lp-vet sample")?;
    run.seed(seed);
    run.param("round", a.round);
    run.param("cap", a.cap);
    run.input(&catalog_path)?;
    run.input(&a.matches)?;
    let catalog = read_catalog(&catalog_path)?;
    let matches = read_match_report(&a.matches)?;

    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    let mut strata: BTreeMap<String, (String, String)> = BTreeMap::new();
    let sentences = pick(&cfg.sentences, a.sentences);
    if let Some(path) = &sentences {
        run.input(path)?;
        let sentences = read_sentences(path)?;
        let reviews = match pick(&cfg.reviews, a.reviews) {
            Some(p) => {
                run.input(&p)?;
                load_reviews(&p)?
            }
            None => Vec::new(),
        };
        let by_review: BTreeMap<&str, (String, String)> = reviews
            .iter()
            .map(|r| {
                let (app, store) = r.stratum();
                (r.id.as_str(), (app, store.to_string()))
            })
            .collect();
        for s in sentences {
            if let Some(k) = by_review.get(s.review_id.as_str()) {
                strata.insert(s.id.clone(), k.clone());
            }
            texts.insert(s.id, s.text);
        }
    }

    let mut by_lp: BTreeMap<&str, Vec<MatchResult>> = BTreeMap::new();
    for m in &matches {
        by_lp.entry(m.lp_id.as_str()).or_default().push(m.clone());
    }
    let mut rows = Vec::new();
    for lp in catalog.iter().filter(|lp| lp.status == LpStatus::Active) {
        let Some(hits) = by_lp.get(lp.id.as_str()) else {
            continue;
        };
        let ids = sample_matches(hits, a.cap, seed, |id| strata.get(id).cloned().unwrap_or_default())?;
        for id in ids {
            let hit = hits.iter().find(|h| h.item_id == id).expect("sampled from hits");
            rows.push(SheetRow {
                lp_id: lp.id.clone(),
                round: a.round,
                item_id: id.clone(),
                matched_text: hit.matched_text.clone(),
                text: texts.get(&id).cloned(),
                verdict: None,
            });
        }
    }
    run.param("rows", rows.len());
    write_jsonl(&run.output("vetting-sheet.jsonl"), &rows)?;
    run.finish()
}

fn vet_record(cfg: &RunConfig, a: VetRecordArgs) -> Result<PathBuf> {
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "lp-vet record")?;
    run.input(&a.sheet)?;
    let ledger_path = run.output("ledger.jsonl");
    if let Some(prior) = &a.ledger {
        run.input(prior)?;
        std::fs::copy(prior, &ledger_path).with_context(|| format!("copying {}", prior.display()))?;
    }
    let rows: Vec<SheetRow> = read_jsonl(&a.sheet)?.into_iter().map(|(_, r)| r).collect();
    let mut groups: BTreeMap<(String, u32), (Vec<String>, BTreeMap<String, Verdict>)> = BTreeMap::new();
    for row in rows {
        let g = groups.entry((row.lp_id, row.round)).or_default();
        g.0.push(row.item_id.clone());
        if let Some(v) = row.verdict {
            g.1.insert(row.item_id, v);
        }
    }
    let mut ledger = VettingLedger::open(&ledger_path)?;
    for ((lp_id, round), (sampled, verdicts)) in groups {
        let rec = record_vetting(&lp_id, round, &sampled, &verdicts)
            .with_context(|| format!("pattern `{lp_id}`, round {round}"))?;
        ledger.append(rec)?;
    }
    run.param("records", ledger.records().len());
    run.finish()
}

#[derive(Debug, Serialize)]
struct PruneSummary {
    round: u32,
    micro_precision: Option<f64>,
    active: usize,
    discarded: usize,
    per_pattern: BTreeMap<String, f64>,
}

fn vet_prune(cfg: &RunConfig, a: VetPruneArgs) -> Result<PathBuf> {
    let catalog_path = required(pick(&cfg.catalog, a.catalog), "--catalog")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "lp-vet prune")?;
    run.param("round", a.round);
    run.input(&catalog_path)?;
    run.input(&a.ledger)?;
    let catalog = read_catalog(&catalog_path)?;
    let ledger = VettingLedger::open(&a.ledger)?;
    if !ledger.records().iter().any(|r| r.round == a.round) {
        bail!("ledger {} has no records for round {}", a.ledger.display(), a.round);
    }
    let pruned = prune_catalog(&catalog, ledger.records(), a.round);
    let summary = PruneSummary {
        round: a.round,
        micro_precision: micro_precision(ledger.records(), a.round),
        active: pruned.iter().filter(|l| l.status == LpStatus::Active).count(),
        discarded: pruned.iter().filter(|l| l.status == LpStatus::Discarded).count(),
        per_pattern: ledger
            .records()
            .iter()
            .filter(|r| r.round == a.round)
            .filter_map(|r| Some((r.lp_id.clone(), r.precision()?)))
            .collect(),
    };
    write_catalog(&run.output("catalog.jsonl"), &pruned)?;
    run.write_json("precision.json", &summary)?;
    run.finish()
}
