//! Micro-task annotation: sessions with a qualification quiz, paged
//! judgments with embedded test questions, and a durable judgment store.

pub mod service;
pub mod store;
pub mod templates;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::judgments::JudgmentRecord;
use crate::labels::{ClassLabel, LabelSet, PhaseId};
use crate::phases::schema_for;

pub use service::{CrowdService, PageItem, PageView, QuizVerdict, SessionView};
pub use store::JudgmentStore;
pub use templates::{default_job, JobDescription};

pub const PAGES_PER_SESSION: usize = 5;
pub const SLOTS_PER_PAGE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerStatus {
    #[default]
    New,
    Eligible,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub id: String,
    pub phase: PhaseId,
    pub eligibility_score: Option<f64>,
    pub status: WorkerStatus,
    /// Set once running test accuracy fell below the threshold.
    #[serde(default)]
    pub flagged: bool,
}

impl Worker {
    pub fn new(id: impl Into<String>, phase: PhaseId) -> Self {
        Worker {
            id: id.into(),
            phase,
            eligibility_score: None,
            status: WorkerStatus::New,
            flagged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestQuestion {
    pub item: Item,
    pub expected: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub item_id: String,
    pub is_test: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_labels: Option<LabelSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub session_id: String,
    pub page_number: usize,
    pub slots: Vec<Slot>,
}

impl Page {
    pub fn slot(&self, item_id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.item_id == item_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    InQuiz,
    Active,
    Abandoned,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub phase: PhaseId,
    pub worker_id: String,
    pub pages: Vec<Page>,
    pub state: SessionState,
    /// 1-based page the worker is on.
    pub current_page: usize,
    pub answered: BTreeSet<String>,
}

impl Session {
    pub fn page(&self, n: usize) -> Option<&Page> {
        self.pages.get(n.checked_sub(1)?)
    }

    pub fn test_slots(&self) -> usize {
        self.pages.iter().flat_map(|p| &p.slots).filter(|s| s.is_test).count()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.pages.iter().flat_map(|p| &p.slots).map(|s| s.item_id.as_str())
    }

    fn page_done(&self, n: usize) -> bool {
        self.page(n)
            .is_some_and(|p| p.slots.iter().all(|s| self.answered.contains(&s.item_id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdConfig {
    pub eligibility_threshold: f64,
    #[serde(default)]
    pub phase_thresholds: std::collections::BTreeMap<PhaseId, f64>,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        CrowdConfig {
            eligibility_threshold: 0.70,
            phase_thresholds: Default::default(),
        }
    }
}

impl CrowdConfig {
    pub fn threshold(&self, phase: PhaseId) -> f64 {
        self.phase_thresholds
            .get(&phase)
            .copied()
            .unwrap_or(self.eligibility_threshold)
    }
}

/// `correct / total >= threshold`, tolerant of binary fractions.
pub fn meets(correct: usize, total: usize, threshold: f64) -> bool {
    total > 0 && correct as f64 >= threshold * total as f64 - 1e-9
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CrowdError {
    #[error("worker `{0}` was rejected for this phase")]
    WorkerRejected(String),
    #[error("not enough test questions: need {needed}, have {available}")]
    TestPoolShort { needed: usize, available: usize },
    #[error("no unjudged items left for worker `{0}`")]
    ItemPoolEmpty(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is not taking the quiz")]
    NotInQuiz(String),
    #[error("session `{0}` is not active")]
    NotActive(String),
    #[error("quiz needs {expected} answers, got {got}")]
    AnswerCount { expected: usize, got: usize },
    #[error("item `{item_id}` is not on page {page}")]
    NotOnPage { item_id: String, page: usize },
    #[error("label {label} is not part of phase {phase}")]
    IllegalLabel { label: ClassLabel, phase: PhaseId },
    #[error("worker `{worker_id}` already judged `{item_id}`")]
    Duplicate { worker_id: String, item_id: String },
    #[error("page {page} does not exist (session has {pages})")]
    NoSuchPage { page: usize, pages: usize },
    #[error("page {page} is not available yet")]
    PageLocked { page: usize },
    #[error("unknown phase {0} for this service")]
    UnknownPhase(PhaseId),
    #[error("store: {0}")]
    Store(String),
}

/// A candidate item and how many more judgments it needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub item_id: String,
    pub needed: u32,
}

/// Builds the pages of a session: page 1 holds ten test questions, each later
/// page nine pool items and one test at a random position. Pool items are
/// taken in order of remaining need, highest first, with seeded tie-breaks.
/// If the pool runs short the last page is smaller and trailing pages are
/// dropped.
pub fn compose_pages(
    session_id: &str,
    candidates: &[Candidate],
    tests: &[TestQuestion],
    seed: u64,
) -> Result<Vec<Page>, CrowdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_page = SLOTS_PER_PAGE - 1;
    let test_ids: BTreeSet<&str> = tests.iter().map(|t| t.item.id.as_str()).collect();

    let mut pool: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.needed > 0 && !test_ids.contains(c.item_id.as_str()))
        .collect();
    pool.shuffle(&mut rng);
    // stable: shuffled order breaks ties among equal need
    pool.sort_by_key(|c| std::cmp::Reverse(c.needed));
    let mut seen = BTreeSet::new();
    pool.retain(|c| seen.insert(c.item_id.as_str()));
    pool.truncate(per_page * (PAGES_PER_SESSION - 1));
    if pool.is_empty() {
        return Err(CrowdError::ItemPoolEmpty(session_id.to_string()));
    }
    let work_pages = pool.len().div_ceil(per_page);
    let needed_tests = SLOTS_PER_PAGE + work_pages;
    if tests.len() < needed_tests {
        return Err(CrowdError::TestPoolShort {
            needed: needed_tests,
            available: tests.len(),
        });
    }
    let mut test_order: Vec<&TestQuestion> = tests.iter().collect();
    test_order.shuffle(&mut rng);
    let mut test_iter = test_order.into_iter();
    let test_slot = |t: &TestQuestion| Slot {
        item_id: t.item.id.clone(),
        is_test: true,
        expected_labels: Some(t.expected.clone()),
    };

    let mut pages = vec![Page {
        session_id: session_id.to_string(),
        page_number: 1,
        slots: test_iter.by_ref().take(SLOTS_PER_PAGE).map(test_slot).collect(),
    }];
    for (i, chunk) in pool.chunks(per_page).enumerate() {
        let mut slots: Vec<Slot> = chunk
            .iter()
            .map(|c| Slot {
                item_id: c.item_id.clone(),
                is_test: false,
                expected_labels: None,
            })
            .collect();
        let pos = rng.gen_range(0..=slots.len());
        slots.insert(pos, test_slot(test_iter.next().expect("counted above")));
        pages.push(Page {
            session_id: session_id.to_string(),
            page_number: i + 2,
            slots,
        });
    }
    Ok(pages)
}

/// `max(0, required − trusted non-test records for the item)`.
pub fn judgments_needed(phase: PhaseId, item_id: &str, records: &[JudgmentRecord]) -> u32 {
    let have = records
        .iter()
        .filter(|r| r.phase == phase && r.item_id == item_id && r.is_usable())
        .count() as u32;
    schema_for(phase).judgments_per_item.saturating_sub(have)
}

/// Non-test trusted records of the phase sorted by (item, worker), and the
/// number of non-test records left out as untrusted.
pub fn export_judgments(records: &[JudgmentRecord], phase: PhaseId) -> (Vec<JudgmentRecord>, usize) {
    let mut out: Vec<JudgmentRecord> = records
        .iter()
        .filter(|r| r.phase == phase && r.is_usable())
        .cloned()
        .collect();
    out.sort_by(|a, b| (&a.item_id, &a.worker_id).cmp(&(&b.item_id, &b.worker_id)));
    let excluded = records
        .iter()
        .filter(|r| r.phase == phase && !r.is_test && !r.trusted)
        .count();
    (out, excluded)
}

/// Test-question grades of the phase, in the same order as the export.
pub fn export_test_grades(records: &[JudgmentRecord], phase: PhaseId) -> Vec<JudgmentRecord> {
    let mut out: Vec<JudgmentRecord> = records
        .iter()
        .filter(|r| r.phase == phase && r.is_test)
        .cloned()
        .collect();
    out.sort_by(|a, b| (&a.item_id, &a.worker_id).cmp(&(&b.item_id, &b.worker_id)));
    out
}
