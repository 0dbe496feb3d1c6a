//! Majority voting over judgments and agreement buckets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::GoldStandard;
use crate::eval::{render_metric, Ratio};
use crate::judgments::JudgmentRecord;
use crate::labels::{ClassLabel, LabelSet, PhaseId};
use crate::phases::{Prediction, Provenance};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("tally for `{0}` has no votes")]
    EmptyTally(String),
    #[error("tally for `{0}`: fewer votes than judges")]
    Inconsistent(String),
    #[error("ensemble mixes items `{0}` and `{1}`")]
    MixedItems(String, String),
    #[error("ensemble mixes phases {0} and {1}")]
    MixedPhases(PhaseId, PhaseId),
    #[error("ensemble has no predictions")]
    NoPredictions,
    #[error("item `{0}` is missing from gold")]
    MissingGold(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub item_id: String,
    pub counts: BTreeMap<ClassLabel, u64>,
    pub n_judges: u64,
}

impl VoteTally {
    pub fn new(item_id: impl Into<String>, votes: impl IntoIterator<Item = ClassLabel>) -> Self {
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for l in votes {
            *counts.entry(l).or_insert(0) += 1;
            n += 1;
        }
        VoteTally {
            item_id: item_id.into(),
            counts,
            n_judges: n,
        }
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn argmax(&self) -> LabelSet {
        let max = self.max_count();
        self.counts
            .iter()
            .filter(|(_, c)| **c == max && max > 0)
            .map(|(l, _)| *l)
            .collect()
    }

    fn check(&self) -> Result<(), AggregateError> {
        if self.n_judges == 0 {
            return Err(AggregateError::EmptyTally(self.item_id.clone()));
        }
        // a judge with a multi-label prediction adds one count per label
        if self.counts.values().sum::<u64>() < self.n_judges {
            return Err(AggregateError::Inconsistent(self.item_id.clone()));
        }
        Ok(())
    }
}

/// One tally per item over usable (trusted, non-test) records, in item order.
pub fn tally_judgments(records: &[JudgmentRecord]) -> Vec<VoteTally> {
    let mut by_item: BTreeMap<&str, Vec<ClassLabel>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_usable()) {
        by_item.entry(&r.item_id).or_default().push(r.label);
    }
    by_item
        .into_iter()
        .map(|(id, votes)| VoteTally::new(id, votes))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    #[default]
    MultiLabel,
    Omit,
}

impl TiePolicy {
    /// Omission for two-label phases, multi-label otherwise.
    pub fn for_phase(phase: PhaseId) -> Self {
        if phase.is_binary() {
            TiePolicy::Omit
        } else {
            TiePolicy::MultiLabel
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VoteOutcome {
    Decided(Prediction),
    Omitted { item_id: String },
}

impl VoteOutcome {
    pub fn prediction(&self) -> Option<&Prediction> {
        match self {
            VoteOutcome::Decided(p) => Some(p),
            VoteOutcome::Omitted { .. } => None,
        }
    }
}

pub fn majority_vote(
    tally: &VoteTally,
    phase: PhaseId,
    policy: TiePolicy,
    provenance: Provenance,
) -> Result<VoteOutcome, AggregateError> {
    tally.check()?;
    let top = tally.argmax();
    if top.len() > 1 && policy == TiePolicy::Omit {
        return Ok(VoteOutcome::Omitted {
            item_id: tally.item_id.clone(),
        });
    }
    Ok(VoteOutcome::Decided(Prediction::new(
        tally.item_id.clone(),
        phase,
        top,
        provenance,
    )))
}

pub fn aggregate_judgments(
    records: &[JudgmentRecord],
    phase: PhaseId,
    policy: TiePolicy,
) -> Result<Vec<VoteOutcome>, AggregateError> {
    tally_judgments(records)
        .iter()
        .map(|t| majority_vote(t, phase, policy, Provenance::Crowd))
        .collect()
}

/// How a condition that itself emitted several labels votes in an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitVote {
    /// One vote divided equally among the labels.
    #[default]
    Fractional,
    /// A full vote for every label.
    FullPerLabel,
    /// The condition abstains.
    Drop,
}

// Divisible by every label-set size up to 12, so fractional votes stay integral.
const VOTE_UNIT: u64 = 27_720;

pub fn ensemble_vote(
    predictions: &[Prediction],
    split: SplitVote,
) -> Result<VoteOutcome, AggregateError> {
    let first = predictions.first().ok_or(AggregateError::NoPredictions)?;
    let mut weights: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    for p in predictions {
        if p.item_id != first.item_id {
            return Err(AggregateError::MixedItems(first.item_id.clone(), p.item_id.clone()));
        }
        if p.phase != first.phase {
            return Err(AggregateError::MixedPhases(first.phase, p.phase));
        }
        let k = p.labels.len() as u64;
        let w = match (k, split) {
            (0, _) => continue,
            (1, _) | (_, SplitVote::FullPerLabel) => VOTE_UNIT,
            (_, SplitVote::Fractional) => VOTE_UNIT / k,
            (_, SplitVote::Drop) => continue,
        };
        for l in &p.labels {
            *weights.entry(*l).or_insert(0) += w;
        }
    }
    let max = weights.values().copied().max().unwrap_or(0);
    if max == 0 {
        return Ok(VoteOutcome::Omitted {
            item_id: first.item_id.clone(),
        });
    }
    let top: LabelSet = weights
        .iter()
        .filter(|(_, w)| **w == max)
        .map(|(l, _)| *l)
        .collect();
    if top.len() > 1 && TiePolicy::for_phase(first.phase) == TiePolicy::Omit {
        return Ok(VoteOutcome::Omitted {
            item_id: first.item_id.clone(),
        });
    }
    Ok(VoteOutcome::Decided(Prediction::new(
        first.item_id.clone(),
        first.phase,
        top,
        Provenance::LlmEnsemble,
    )))
}

/// Ensemble over per-condition prediction lists, item by item. Items missing
/// from some conditions are voted on by the conditions that have them.
pub fn ensemble_all(
    per_condition: &[Vec<Prediction>],
    split: SplitVote,
) -> Result<Vec<VoteOutcome>, AggregateError> {
    let mut by_item: BTreeMap<&str, Vec<Prediction>> = BTreeMap::new();
    for preds in per_condition {
        for p in preds {
            by_item.entry(&p.item_id).or_default().push(p.clone());
        }
    }
    by_item
        .values()
        .map(|ps| ensemble_vote(ps, split))
        .collect()
}

/// Tally for agreement bucketing: every label of a condition's prediction
/// counts as a full vote.
pub fn tally_predictions(item_id: &str, predictions: &[Prediction]) -> VoteTally {
    let mut counts = BTreeMap::new();
    for p in predictions {
        for l in &p.labels {
            *counts.entry(*l).or_insert(0) += 1;
        }
    }
    VoteTally {
        item_id: item_id.to_string(),
        n_judges: predictions.len() as u64,
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementBucket {
    /// Highest count on a single label.
    pub k: u64,
    /// Judges per item.
    pub n: u64,
    pub items: Vec<String>,
    pub correct: u64,
    pub incorrect: u64,
    #[serde(default)]
    pub omitted: u64,
}

impl AgreementBucket {
    pub fn is_no_agreement(&self) -> bool {
        self.k <= 1 && self.n > 1
    }

    pub fn level(&self) -> String {
        if self.is_no_agreement() {
            "No agreement".to_string()
        } else {
            format!("{} of {}", self.k, self.n)
        }
    }

    pub fn accuracy(&self) -> Option<Ratio> {
        Ratio::new(self.correct, self.correct + self.incorrect)
    }
}

/// Groups items by (judges, top count), highest agreement first. Each item's
/// majority prediction is scored against gold with the any-match rule.
pub fn agreement_buckets(
    tallies: &[VoteTally],
    gold: &GoldStandard,
    policy: TiePolicy,
) -> Result<Vec<AgreementBucket>, AggregateError> {
    let mut buckets: BTreeMap<(u64, u64), AgreementBucket> = BTreeMap::new();
    for t in tallies {
        let g = gold
            .get(&t.item_id)
            .ok_or_else(|| AggregateError::MissingGold(t.item_id.clone()))?;
        let outcome = majority_vote(t, gold.phase, policy, Provenance::Crowd)?;
        let k = t.max_count();
        let b = buckets.entry((t.n_judges, k)).or_insert_with(|| AgreementBucket {
            k,
            n: t.n_judges,
            items: Vec::new(),
            correct: 0,
            incorrect: 0,
            omitted: 0,
        });
        b.items.push(t.item_id.clone());
        match outcome.prediction() {
            None => b.omitted += 1,
            Some(p) if p.labels.intersection(g).next().is_some() => b.correct += 1,
            Some(_) => b.incorrect += 1,
        }
    }
    let mut out: Vec<AgreementBucket> = buckets.into_values().collect();
    out.sort_by(|a, b| {
        a.is_no_agreement()
            .cmp(&b.is_no_agreement())
            .then(b.n.cmp(&a.n))
            .then(b.k.cmp(&a.k))
    });
    Ok(out)
}

pub fn render_bucket_report(buckets: &[AgreementBucket]) -> String {
    let mut out = format!(
        "{:<14} | {:>7} | {:>7} | {:>9} | {:>8}\n",
        "Agreement", "Items", "Correct", "Incorrect", "Accuracy"
    );
    let (mut items, mut correct, mut incorrect) = (0, 0, 0);
    for b in buckets {
        let _ = writeln!(
            out,
            "{:<14} | {:>7} | {:>7} | {:>9} | {:>8}",
            b.level(),
            b.items.len(),
            b.correct,
            b.incorrect,
            render_metric(b.accuracy())
        );
        items += b.items.len();
        correct += b.correct;
        incorrect += b.incorrect;
    }
    let _ = writeln!(
        out,
        "{:<14} | {:>7} | {:>7} | {:>9} | {:>8}",
        "Total",
        items,
        correct,
        incorrect,
        render_metric(Ratio::new(correct, correct + incorrect))
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Feature, Helpful, Performance, Quality, Stability, Useless};

    fn votes(spec: &[(ClassLabel, usize)]) -> VoteTally {
        VoteTally::new(
            "x",
            spec.iter().flat_map(|(l, n)| std::iter::repeat_n(*l, *n)),
        )
    }

    fn decided(o: VoteOutcome) -> LabelSet {
        o.prediction().expect("decided").labels.clone()
    }

    #[test]
    fn strict_majority() {
        let t = votes(&[(Stability, 4), (ClassLabel::None, 2)]);
        let o = majority_vote(&t, PhaseId::P3, TiePolicy::MultiLabel, Provenance::Crowd).unwrap();
        assert_eq!(decided(o), LabelSet::from([Stability]));
    }

    #[test]
    fn tie_policies() {
        let t = votes(&[(Quality, 3), (Feature, 3)]);
        let o = majority_vote(&t, PhaseId::P3, TiePolicy::MultiLabel, Provenance::Crowd).unwrap();
        assert_eq!(decided(o), LabelSet::from([Quality, Feature]));
        let t = votes(&[(Helpful, 4), (Useless, 4)]);
        let o = majority_vote(&t, PhaseId::P1, TiePolicy::Omit, Provenance::LlmEnsemble).unwrap();
        assert_eq!(o, VoteOutcome::Omitted { item_id: "x".into() });
    }

    #[test]
    fn empty_and_inconsistent_tallies() {
        let t = votes(&[]);
        assert!(matches!(
            majority_vote(&t, PhaseId::P3, TiePolicy::MultiLabel, Provenance::Crowd),
            Err(AggregateError::EmptyTally(_))
        ));
        let mut t = votes(&[(Feature, 2)]);
        t.n_judges = 3;
        assert!(tally_predictions("y", &[cond(PhaseId::P3Prime, &[Feature, Stability])]).n_judges == 1);
        assert!(matches!(
            majority_vote(&t, PhaseId::P3, TiePolicy::MultiLabel, Provenance::Crowd),
            Err(AggregateError::Inconsistent(_))
        ));
    }

    fn cond(phase: PhaseId, labels: &[ClassLabel]) -> Prediction {
        Prediction::new("x", phase, labels.iter().copied(), Provenance::LlmCondition)
    }

    #[test]
    fn ensemble_examples() {
        let all: Vec<_> = (0..8).map(|_| cond(PhaseId::P3Prime, &[Stability])).collect();
        assert_eq!(
            decided(ensemble_vote(&all, SplitVote::Fractional).unwrap()),
            LabelSet::from([Stability])
        );
        let split: Vec<_> = (0..8)
            .map(|i| cond(PhaseId::P1, &[if i < 4 { Helpful } else { Useless }]))
            .collect();
        assert!(matches!(
            ensemble_vote(&split, SplitVote::Fractional).unwrap(),
            VoteOutcome::Omitted { .. }
        ));
        let five_three: Vec<_> = (0..8)
            .map(|i| cond(PhaseId::P3Prime, &[if i < 5 { Feature } else { ClassLabel::None }]))
            .collect();
        assert_eq!(
            decided(ensemble_vote(&five_three, SplitVote::Fractional).unwrap()),
            LabelSet::from([Feature])
        );
    }

    #[test]
    fn split_vote_variants() {
        // 3 x Feature, 2 x Performance, 1 x {Performance, Feature}
        let mut ps: Vec<_> = (0..3).map(|_| cond(PhaseId::P3Prime, &[Feature])).collect();
        ps.extend((0..2).map(|_| cond(PhaseId::P3Prime, &[Performance])));
        ps.push(cond(PhaseId::P3Prime, &[Performance, Feature]));
        let f = |ps: &[Prediction], s| decided(ensemble_vote(ps, s).unwrap());
        assert_eq!(f(&ps, SplitVote::Fractional), LabelSet::from([Feature]));
        assert_eq!(f(&ps, SplitVote::FullPerLabel), LabelSet::from([Feature]));
        assert_eq!(f(&ps, SplitVote::Drop), LabelSet::from([Feature]));
        ps.push(cond(PhaseId::P3Prime, &[Performance]));
        // 3.5 against 3.5
        assert_eq!(f(&ps, SplitVote::Fractional), LabelSet::from([Feature, Performance]));
        assert_eq!(f(&ps, SplitVote::FullPerLabel), LabelSet::from([Feature, Performance]));
        assert_eq!(f(&ps, SplitVote::Drop), LabelSet::from([Feature, Performance]));
    }

    #[test]
    fn ensemble_rejects_mixed_items() {
        let mut b = cond(PhaseId::P3Prime, &[Feature]);
        b.item_id = "y".into();
        assert!(matches!(
            ensemble_vote(&[cond(PhaseId::P3Prime, &[Feature]), b], SplitVote::Fractional),
            Err(AggregateError::MixedItems(..))
        ));
    }

    #[test]
    fn buckets_partition_items() {
        let mut gold = GoldStandard::new(PhaseId::P3Prime);
        gold.insert("a", [Feature]).unwrap();
        gold.insert("b", [Stability]).unwrap();
        let ta = VoteTally::new("a", std::iter::repeat_n(Feature, 6));
        let tb = VoteTally::new(
            "b",
            [
                Feature,
                Stability,
                Performance,
                ClassLabel::None,
                ClassLabel::Compatibility,
                ClassLabel::Security,
            ],
        );
        let b = agreement_buckets(&[tb, ta], &gold, TiePolicy::MultiLabel).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].level(), "6 of 6");
        assert_eq!(b[0].accuracy().unwrap().value(), 1.0);
        assert_eq!(b[1].level(), "No agreement");
        // six-way tie includes Stability, so the item counts as correct
        assert_eq!(b[1].correct, 1);
        let report = render_bucket_report(&b);
        assert!(report.contains("Total"));
    }
}
