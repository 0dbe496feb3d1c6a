//! Single-label judgments from crowd workers or LLM conditions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, RecordError};
use crate::labels::{ClassLabel, LabelSet, PhaseId};

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub worker_id: String,
    pub item_id: String,
    pub phase: PhaseId,
    pub label: ClassLabel,
    /// Second label of a tie-only dual answer (LLM conditions only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_with: Option<ClassLabel>,
    #[serde(default)]
    pub is_test: bool,
    /// Grade of a test judgment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub trusted: bool,
    /// Milliseconds since the Unix epoch, or a logical tick in replays.
    pub submitted_at: u64,
}

impl JudgmentRecord {
    /// Counts toward aggregation.
    pub fn is_usable(&self) -> bool {
        self.trusted && !self.is_test
    }

    pub fn labels(&self) -> LabelSet {
        self.tie_with.into_iter().chain([self.label]).collect()
    }
}

pub fn read_judgments(path: &Path) -> Result<Vec<JudgmentRecord>, RecordError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn write_judgments(path: &Path, records: &[JudgmentRecord]) -> Result<(), RecordError> {
    io::write_jsonl(path, records)
}
