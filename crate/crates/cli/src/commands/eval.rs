use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use qaspect_core::aggregate::{
    aggregate_judgments, agreement_buckets, ensemble_all, render_bucket_report, tally_judgments,
    tally_predictions, AgreementBucket, SplitVote, TiePolicy, VoteOutcome, VoteTally,
};
use qaspect_core::corpus::{load_gold, GoldStandard};
use qaspect_core::crowd::{export_judgments, JudgmentStore};
use qaspect_core::eval::{
    confusion_matrix, distribution_report, render_distribution, render_metric,
    render_metrics_table, render_roc_plot_data, roc_auc, roc_points, score_all, BinaryMetrics,
    ConditionCounts, LabelCounts, LabelScore, Ratio, Summary,
};
use qaspect_core::io::write_jsonl;
use qaspect_core::judgments::{read_judgments, JudgmentRecord};
use qaspect_core::llm::judgments_to_predictions;
use qaspect_core::phases::{
    compose_all, read_predictions, write_predictions, Prediction, QualityTiePolicy,
};
use qaspect_core::{ClassLabel, PhaseId};

use super::{out_dir, phase, required};
use crate::config::{pick, RunConfig};
use crate::manifest::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Majority vote per item over individual judgments.
    Vote,
    /// Each judge's judgments form a prediction; the judges vote per item.
    Ensemble,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    Fractional,
    FullPerLabel,
    Drop,
}

impl From<Split> for SplitVote {
    fn from(s: Split) -> Self {
        match s {
            Split::Fractional => SplitVote::Fractional,
            Split::FullPerLabel => SplitVote::FullPerLabel,
            Split::Drop => SplitVote::Drop,
        }
    }
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Judgment files (crowd export or llm-run output); repeatable.
    #[arg(long = "judgments")]
    pub judgments: Vec<PathBuf>,
    /// Read judgments straight from a crowd store directory instead.
    #[arg(long, conflicts_with = "judgments")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long, value_enum, default_value = "vote")]
    pub mode: Mode,
    /// How an ensemble counts a judge that answered with a tie.
    #[arg(long, value_enum, default_value = "fractional")]
    pub split: Split,
    /// With gold, an agreement-level report is written too.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn gather(a: &AggregateArgs, phase: PhaseId, run: &mut RunDir) -> Result<(Vec<JudgmentRecord>, usize)> {
    if let Some(dir) = &a.store {
        run.param("store", dir.display());
        let store = JudgmentStore::open(dir)?;
        return Ok(export_judgments(store.records(), phase));
    }
    if a.judgments.is_empty() {
        bail!("pass --judgments or --store");
    }
    let mut records = Vec::new();
    for path in &a.judgments {
        run.input(path)?;
        records.extend(read_judgments(path).with_context(|| format!("reading {}", path.display()))?);
    }
    records.retain(|r| r.phase == phase);
    let excluded = records.iter().filter(|r| !r.is_test && !r.trusted).count();
    records.retain(|r| r.is_usable());
    Ok((records, excluded))
}

fn split_outcomes(outcomes: Vec<VoteOutcome>) -> (Vec<Prediction>, Vec<String>) {
    let mut preds = Vec::new();
    let mut omitted = Vec::new();
    for o in outcomes {
        match o {
            VoteOutcome::Decided(p) => preds.push(p),
            VoteOutcome::Omitted { item_id } => omitted.push(item_id),
        }
    }
    (preds, omitted)
}

fn lines(ids: &[String]) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}

pub fn aggregate(cfg: &RunConfig, a: AggregateArgs) -> Result<PathBuf> {
    let phase = phase(cfg, a.phase.clone())?;
    let mut run = RunDir::create(&out_dir(cfg, a.out.clone())?, "aggregate")?;
    run.param("phase", phase);
    run.param("mode", format!("{:?}", a.mode).to_lowercase());
    let (records, excluded) = gather(&a, phase, &mut run)?;
    run.param("judgments", records.len());
    run.param("excluded_untrusted", excluded);
    let policy = TiePolicy::for_phase(phase);

    let (outcomes, tallies) = match a.mode {
        Mode::Vote => (aggregate_judgments(&records, phase, policy)?, tally_judgments(&records)),
        Mode::Ensemble => {
            let split = SplitVote::from(a.split);
            run.param("split", format!("{split:?}"));
            let per_judge = judgments_to_predictions(&records);
            for (judge, preds) in &per_judge {
                let rel = format!("conditions/{}.jsonl", judge.replace(',', "-"));
                write_predictions(&run.output(&rel), preds)?;
            }
            let lists: Vec<Vec<Prediction>> = per_judge.into_values().collect();
            let mut by_item: BTreeMap<&str, Vec<Prediction>> = BTreeMap::new();
            for p in lists.iter().flatten() {
                by_item.entry(&p.item_id).or_default().push(p.clone());
            }
            let tallies: Vec<VoteTally> = by_item.iter().map(|(id, ps)| tally_predictions(id, ps)).collect();
            (ensemble_all(&lists, split)?, tallies)
        }
    };
    let (preds, omitted) = split_outcomes(outcomes);
    run.param("predictions", preds.len());
    run.param("omitted", omitted.len());
    write_predictions(&run.output("predictions.jsonl"), &preds)?;
    run.write_text("omitted.txt", &lines(&omitted))?;

    if let Some(path) = pick(&cfg.gold, a.gold.clone()) {
        run.input(&path)?;
        let gold = load_gold(&path, phase)?;
        let (known, unknown): (Vec<VoteTally>, Vec<VoteTally>) =
            tallies.into_iter().partition(|t| gold.get(&t.item_id).is_some());
        if !unknown.is_empty() {
            log::warn!("{} judged items have no gold entry and are left out of the agreement report", unknown.len());
        }
        let buckets: Vec<AgreementBucket> = agreement_buckets(&known, &gold, policy)?;
        run.write_text("agreement.txt", &render_bucket_report(&buckets))?;
        run.write_json("agreement.json", &buckets)?;
    }
    run.finish()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    Inclusive,
    Strict,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub p3: PathBuf,
    #[arg(long)]
    pub p4: PathBuf,
    /// Which P3 ties involving Quality went on to P4.
    #[arg(long, value_enum, default_value = "inclusive")]
    pub policy: Policy,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn compose(cfg: &RunConfig, a: ComposeArgs) -> Result<PathBuf> {
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "compose")?;
    run.input(&a.p3)?;
    run.input(&a.p4)?;
    let policy = match a.policy {
        Policy::Inclusive => QualityTiePolicy::Inclusive,
        Policy::Strict => QualityTiePolicy::Strict,
    };
    run.param("policy", format!("{policy:?}").to_lowercase());
    let p3 = read_predictions(&a.p3)?;
    let p4 = read_predictions(&a.p4)?;
    let composed = compose_all(&p3, &p4, policy)?;
    write_predictions(&run.output("predictions.jsonl"), &composed)?;
    run.finish()
}

/// Predictions for `phase` restricted to gold items, plus the gold reduced
/// to the items that were predicted.
struct Aligned {
    preds: Vec<Prediction>,
    gold: GoldStandard,
    missing: usize,
    extra: usize,
}

fn align_to_gold(preds: Vec<Prediction>, gold: &GoldStandard, phase: PhaseId) -> Result<Aligned> {
    if let Some(p) = preds.iter().find(|p| p.phase != phase) {
        bail!("prediction for `{}` is for phase {}, expected {phase}", p.item_id, p.phase);
    }
    let (preds, extra): (Vec<Prediction>, Vec<Prediction>) =
        preds.into_iter().partition(|p| gold.get(&p.item_id).is_some());
    let mut reduced = GoldStandard::new(phase);
    for p in &preds {
        reduced.insert(p.item_id.clone(), gold.get(&p.item_id).unwrap().clone())?;
    }
    Ok(Aligned {
        missing: gold.len() - reduced.len(),
        extra: extra.len(),
        preds,
        gold: reduced,
    })
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LabelReport {
    #[serde(flatten)]
    counts: LabelCounts,
    precision: Option<f64>,
    recall: Option<f64>,
    specificity: Option<f64>,
    accuracy: Option<f64>,
}

fn value(r: Option<Ratio>) -> Option<f64> {
    r.map(Ratio::value)
}

impl From<LabelCounts> for LabelReport {
    fn from(counts: LabelCounts) -> Self {
        let m = counts.metrics();
        LabelReport {
            counts,
            precision: value(m.precision),
            recall: value(m.recall),
            specificity: value(m.specificity),
            accuracy: value(m.accuracy),
        }
    }
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    phase: PhaseId,
    scored: u64,
    correct: u64,
    accuracy: Option<f64>,
    /// Gold items with no prediction (e.g. omitted ties); not scored.
    missing_predictions: usize,
    /// Predictions for items outside the gold standard; not scored.
    extra_predictions: usize,
    per_label: BTreeMap<ClassLabel, LabelReport>,
    /// Per-label figures read off the confusion matrix.
    confusion: Vec<LabelScore>,
    confusion_accuracy: Option<f64>,
}

pub fn score(cfg: &RunConfig, a: ScoreArgs) -> Result<PathBuf> {
    let phase = phase(cfg, a.phase)?;
    let gold_path = required(pick(&cfg.gold, a.gold), "--gold")?;
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "score")?;
    run.param("phase", phase);
    if let Some(approach) = cfg.approach {
        run.param("approach", format!("{approach:?}").to_lowercase());
    }
    run.input(&a.pred)?;
    run.input(&gold_path)?;
    let gold = load_gold(&gold_path, phase)?;
    let aligned = align_to_gold(read_predictions(&a.pred)?, &gold, phase)?;
    if aligned.preds.is_empty() {
        bail!("no prediction matches a gold item");
    }
    let outcomes = score_all(&aligned.preds, &aligned.gold)?;
    let summary = Summary::from_outcomes(&outcomes);
    let matrix = confusion_matrix(&aligned.preds, &aligned.gold, phase)?;

    let report = ScoreReport {
        phase,
        scored: summary.items,
        correct: summary.correct,
        accuracy: value(summary.accuracy()),
        missing_predictions: aligned.missing,
        extra_predictions: aligned.extra,
        per_label: summary.per_label.iter().map(|(l, c)| (*l, (*c).into())).collect(),
        confusion: matrix.label_scores(),
        confusion_accuracy: value(matrix.accuracy()),
    };
    let rows: Vec<(String, BinaryMetrics)> = summary
        .per_label
        .iter()
        .map(|(l, c)| (l.to_string(), c.metrics()))
        .collect();
    let mut text = format!(
        "phase {phase}: {} scored, {} missing predictions, {} extra predictions\naccuracy {}\n\n",
        summary.items,
        aligned.missing,
        aligned.extra,
        render_metric(summary.accuracy())
    );
    text.push_str(&render_metrics_table(&rows));
    run.write_json("metrics.json", &report)?;
    run.write_text("metrics.txt", &text)?;
    run.write_text("confusion.txt", &matrix.render())?;
    run.finish()
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// `NAME=PATH` of a prediction file; repeatable.
    #[arg(long = "pred", required = true)]
    pub preds: Vec<String>,
    /// Positive class for the table and ROC points; defaults to Useless in
    /// the two-label phases.
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ReportRow {
    name: String,
    scored: u64,
    missing_predictions: usize,
    #[serde(flatten)]
    positive: LabelReport,
}

pub fn report(cfg: &RunConfig, a: ReportArgs) -> Result<PathBuf> {
    let phase = phase(cfg, a.phase)?;
    let gold_path = required(pick(&cfg.gold, a.gold), "--gold")?;
    let positive: ClassLabel = match (&a.positive, phase.is_binary()) {
        (Some(l), _) => l.parse().map_err(|e| anyhow!("{e}"))?,
        (None, true) => ClassLabel::Useless,
        (None, false) => bail!("phase {phase} needs --positive"),
    };
    let mut run = RunDir::create(&out_dir(cfg, a.out)?, "report")?;
    run.param("phase", phase);
    run.param("positive", positive);
    run.input(&gold_path)?;
    let gold = load_gold(&gold_path, phase)?;

    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut counts = Vec::new();
    for spec in &a.preds {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--pred takes NAME=PATH, got `{spec}`"))?;
        let path = PathBuf::from(path);
        run.input(&path)?;
        let aligned = align_to_gold(read_predictions(&path)?, &gold, phase)?;
        let summary = Summary::from_outcomes(&score_all(&aligned.preds, &aligned.gold)?);
        let c = summary.per_label.get(&positive).copied().unwrap_or_default();
        table.push((name.to_string(), c.metrics()));
        counts.push(ConditionCounts {
            condition: name.to_string(),
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
        });
        rows.push(ReportRow {
            name: name.to_string(),
            scored: summary.items,
            missing_predictions: aligned.missing,
            positive: c.into(),
        });
    }
    run.write_text("metrics.txt", &render_metrics_table(&table))?;
    write_jsonl(&run.output("metrics.jsonl"), &rows)?;
    let points = roc_points(&counts);
    run.write_text("roc.tsv", &render_roc_plot_data(&points))?;
    write_jsonl(&run.output("roc.jsonl"), &points)?;
    if let Ok(auc) = roc_auc(&points) {
        run.write_text("auc.txt", &format!("{auc:.4}\n"))?;
    }
    let dist = distribution_report(gold.entries.values());
    run.write_text("distribution.txt", &render_distribution(&dist))?;
    run.finish()
}
