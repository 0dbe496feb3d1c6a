//! Phase schemas, predictions, perpetuation between phases and the
//! P3 -> P4 composition into the all-aspects label space.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences_text, Item, ItemSource};
use crate::io::{read_jsonl, write_jsonl, RecordError};
use crate::labels::{ClassLabel, LabelSet, PhaseId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Review,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseSchema {
    pub phase: PhaseId,
    pub unit: Unit,
    pub labels: Vec<ClassLabel>,
    pub judgments_per_item: u32,
}

impl PhaseSchema {
    pub fn allows(&self, label: ClassLabel) -> bool {
        self.labels.contains(&label)
    }

    /// The catch-all class of the schema, if it has one.
    pub fn none_label(&self) -> Option<ClassLabel> {
        self.labels
            .iter()
            .copied()
            .find(|l| matches!(l, ClassLabel::None | ClassLabel::Other))
    }
}

pub fn schema_for(phase: PhaseId) -> PhaseSchema {
    use ClassLabel::*;
    let (unit, labels, judgments_per_item) = match phase {
        PhaseId::P1 => (Unit::Review, vec![Helpful, Useless], 3),
        PhaseId::P2 => (Unit::Sentence, vec![Helpful, Useless], 3),
        PhaseId::P3 => (
            Unit::Sentence,
            vec![Quality, Performance, Stability, Feature, None],
            6,
        ),
        PhaseId::P4 => (
            Unit::Sentence,
            vec![Compatibility, UserFriendliness, Security, Other],
            6,
        ),
        PhaseId::P3Prime => (
            Unit::Sentence,
            vec![
                Compatibility,
                UserFriendliness,
                Security,
                Performance,
                Stability,
                Feature,
                None,
            ],
            6,
        ),
    };
    PhaseSchema {
        phase,
        unit,
        labels,
        judgments_per_item,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Lp,
    Crowd,
    LlmCondition,
    LlmEnsemble,
    Composed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    pub phase: PhaseId,
    pub labels: LabelSet,
    pub provenance: Provenance,
}

impl Prediction {
    pub fn new(
        item_id: impl Into<String>,
        phase: PhaseId,
        labels: impl IntoIterator<Item = ClassLabel>,
        provenance: Provenance,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            phase,
            labels: labels.into_iter().collect(),
            provenance,
        }
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.len() > 1
    }

    pub fn validate(&self) -> Result<(), PhaseError> {
        if self.labels.is_empty() {
            return Err(PhaseError::EmptyPrediction(self.item_id.clone()));
        }
        let schema = schema_for(self.phase);
        if let Some(bad) = self.labels.iter().find(|l| !schema.allows(**l)) {
            return Err(PhaseError::IllegalLabel {
                item_id: self.item_id.clone(),
                label: *bad,
                phase: self.phase,
            });
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PhaseError {
    #[error("no prediction for item `{0}`")]
    MissingPrediction(String),
    #[error("prediction for `{0}` has no labels")]
    EmptyPrediction(String),
    #[error("label {label} is not legal in phase {phase} (item `{item_id}`)")]
    IllegalLabel {
        item_id: String,
        label: ClassLabel,
        phase: PhaseId,
    },
    #[error("phase {from} does not feed phase {to}")]
    NoTransition { from: PhaseId, to: PhaseId },
    #[error("item `{0}` was predicted Quality in P3 but has no P4 prediction")]
    MissingP4(String),
    #[error("item `{0}` has a P4 prediction but its P3 prediction lacks Quality")]
    UnexpectedP4(String),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// How a P3 tie that includes Quality is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityTiePolicy {
    /// Any prediction containing Quality proceeds to P4; the other tied
    /// labels are kept for composition.
    #[default]
    Inclusive,
    /// Only a pure {Quality} majority proceeds; Quality is dropped from ties.
    Strict,
}

impl QualityTiePolicy {
    pub fn proceeds_to_p4(self, p3_labels: &LabelSet) -> bool {
        match self {
            QualityTiePolicy::Inclusive => p3_labels.contains(&ClassLabel::Quality),
            QualityTiePolicy::Strict => {
                p3_labels.len() == 1 && p3_labels.contains(&ClassLabel::Quality)
            }
        }
    }
}

/// Forwards the items of `from` that qualify for `to`.
///
/// P1 -> P2 splits Helpful reviews into sentence items, P2 -> P3/P3prime
/// keeps Helpful sentences and P3 -> P4 keeps sentences routed by `policy`.
pub fn perpetuate(
    from: PhaseId,
    to: PhaseId,
    predictions: &[Prediction],
    items: &[Item],
    policy: QualityTiePolicy,
) -> Result<Vec<Item>, PhaseError> {
    let by_id: HashMap<&str, &Prediction> = predictions
        .iter()
        .map(|p| (p.item_id.as_str(), p))
        .collect();
    let lookup = |item: &Item| {
        by_id
            .get(item.id.as_str())
            .copied()
            .ok_or_else(|| PhaseError::MissingPrediction(item.id.clone()))
    };
    let mut out = Vec::new();
    match (from, to) {
        (PhaseId::P1, PhaseId::P2) => {
            for item in items {
                if !lookup(item)?.labels.contains(&ClassLabel::Helpful) {
                    continue;
                }
                let review_id = item.source.review_id().to_string();
                for (index, text) in split_sentences_text(&item.text).into_iter().enumerate() {
                    out.push(Item {
                        id: format!("{review_id}-s{index}"),
                        phase: PhaseId::P2,
                        text,
                        source: ItemSource::Sentence {
                            review_id: review_id.clone(),
                            index,
                        },
                    });
                }
            }
        }
        (PhaseId::P2, PhaseId::P3 | PhaseId::P3Prime) => {
            for item in items {
                if lookup(item)?.labels.contains(&ClassLabel::Helpful) {
                    out.push(Item {
                        phase: to,
                        ..item.clone()
                    });
                }
            }
        }
        (PhaseId::P3, PhaseId::P4) => {
            for item in items {
                if policy.proceeds_to_p4(&lookup(item)?.labels) {
                    out.push(Item {
                        phase: PhaseId::P4,
                        ..item.clone()
                    });
                }
            }
        }
        _ => return Err(PhaseError::NoTransition { from, to }),
    }
    Ok(out)
}

fn p4_to_p3prime(label: ClassLabel) -> ClassLabel {
    match label {
        ClassLabel::Other => ClassLabel::None,
        other => other,
    }
}

/// Combines a P3 prediction with the optional P4 prediction for the same
/// item into the P3prime label space.
pub fn compose_p3_p4(
    p3: &Prediction,
    p4: Option<&Prediction>,
    policy: QualityTiePolicy,
) -> Result<Prediction, PhaseError> {
    let routed = policy.proceeds_to_p4(&p3.labels);
    let mut labels: LabelSet = p3
        .labels
        .iter()
        .copied()
        .filter(|l| *l != ClassLabel::Quality)
        .collect();
    match (routed, p4) {
        (true, Some(p4)) => labels.extend(p4.labels.iter().copied().map(p4_to_p3prime)),
        (true, None) => return Err(PhaseError::MissingP4(p3.item_id.clone())),
        (false, Some(_)) => return Err(PhaseError::UnexpectedP4(p3.item_id.clone())),
        (false, None) => {}
    }
    if labels.is_empty() {
        // strict policy dropped a lone Quality that never reached P4
        labels.insert(ClassLabel::None);
    }
    let composed = Prediction {
        item_id: p3.item_id.clone(),
        phase: PhaseId::P3Prime,
        labels,
        provenance: Provenance::Composed,
    };
    composed.validate()?;
    Ok(composed)
}

/// Composes whole prediction lists, joining on item id.
pub fn compose_all(
    p3: &[Prediction],
    p4: &[Prediction],
    policy: QualityTiePolicy,
) -> Result<Vec<Prediction>, PhaseError> {
    let p4_by_id: HashMap<&str, &Prediction> =
        p4.iter().map(|p| (p.item_id.as_str(), p)).collect();
    p3.iter()
        .map(|p| compose_p3_p4(p, p4_by_id.get(p.item_id.as_str()).copied(), policy))
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, PhaseError> {
    let records: Vec<(usize, Prediction)> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(records.len());
    for (_, p) in records {
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), PhaseError> {
    Ok(write_jsonl(path, predictions)?)
}
