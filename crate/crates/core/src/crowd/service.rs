//! Thread-safe crowd deployment: worker sessions over shared item pools.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::store::JudgmentStore;
use super::templates::JobDescription;
use super::{
    compose_pages, export_judgments, export_test_grades, meets, Candidate, CrowdConfig, CrowdError,
    Session, SessionState, TestQuestion, Worker, WorkerStatus,
};
use crate::corpus::Item;
use crate::judgments::JudgmentRecord;
use crate::labels::{ClassLabel, PhaseId};
use crate::llm::Clock;
use crate::phases::schema_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageItem {
    pub item_id: String,
    pub text: String,
}

/// What a worker sees of a page. Test slots are indistinguishable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageView {
    pub session_id: String,
    pub page_number: usize,
    pub page_count: usize,
    pub title: String,
    pub instructions: String,
    pub labels: Vec<ClassLabel>,
    pub items: Vec<PageItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub worker_id: String,
    pub phase: PhaseId,
    pub state: SessionState,
    pub current_page: usize,
    pub page_count: usize,
    pub answered: usize,
    pub page: PageView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizVerdict {
    pub correct: usize,
    pub total: usize,
    pub score: f64,
    pub threshold: f64,
    pub status: WorkerStatus,
    pub state: SessionState,
}

struct PhasePool {
    items: BTreeMap<String, Item>,
    tests: Vec<TestQuestion>,
    job: JobDescription,
}

struct Inner {
    config: CrowdConfig,
    store: JudgmentStore,
    phases: BTreeMap<PhaseId, PhasePool>,
    sessions: BTreeMap<String, Session>,
    /// Unanswered pool slots of live sessions, per item.
    reserved: BTreeMap<(PhaseId, String), u32>,
    rng: ChaCha8Rng,
    clock: Box<dyn Clock>,
}

pub struct CrowdService {
    inner: Mutex<Inner>,
}

impl CrowdService {
    pub fn new(config: CrowdConfig, store: JudgmentStore, seed: u64, clock: Box<dyn Clock>) -> Self {
        CrowdService {
            inner: Mutex::new(Inner {
                config,
                store,
                phases: BTreeMap::new(),
                sessions: BTreeMap::new(),
                reserved: BTreeMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                clock,
            }),
        }
    }

    pub fn add_phase(&self, phase: PhaseId, items: Vec<Item>, tests: Vec<TestQuestion>, job: JobDescription) {
        let items = items.into_iter().map(|i| (i.id.clone(), i)).collect();
        self.lock().phases.insert(phase, PhasePool { items, tests, job });
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn issue_worker_id(&self) -> String {
        let mut inner = self.lock();
        format!("w-{}", token(&mut inner.rng))
    }

    pub fn start_session(&self, worker_id: &str, phase: PhaseId) -> Result<SessionView, CrowdError> {
        self.lock().start_session(worker_id, phase)
    }

    pub fn submit_quiz(&self, session_id: &str, answers: &[ClassLabel]) -> Result<QuizVerdict, CrowdError> {
        self.lock().submit_quiz(session_id, answers)
    }

    pub fn page(&self, session_id: &str, n: usize) -> Result<PageView, CrowdError> {
        let inner = self.lock();
        let session = inner.session(session_id)?;
        if n == 0 || n > session.pages.len() {
            return Err(CrowdError::NoSuchPage {
                page: n,
                pages: session.pages.len(),
            });
        }
        if n > session.current_page {
            return Err(CrowdError::PageLocked { page: n });
        }
        inner.view(session, n)
    }

    pub fn submit_judgment(
        &self,
        session_id: &str,
        item_id: &str,
        label: ClassLabel,
    ) -> Result<JudgmentRecord, CrowdError> {
        self.lock().submit(session_id, item_id, label)
    }

    /// Ends a session early. Submitted judgments stay.
    pub fn abandon(&self, session_id: &str) -> Result<(), CrowdError> {
        let mut inner = self.lock();
        let state = inner.session(session_id)?.state;
        if matches!(state, SessionState::InQuiz | SessionState::Active) {
            inner.close(session_id, SessionState::Abandoned);
        }
        Ok(())
    }

    pub fn session(&self, session_id: &str) -> Result<Session, CrowdError> {
        self.lock().session(session_id).cloned()
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView, CrowdError> {
        let inner = self.lock();
        inner.session_view(inner.session(session_id)?)
    }

    pub fn worker(&self, worker_id: &str, phase: PhaseId) -> Option<Worker> {
        self.lock().store.worker(worker_id, phase).cloned()
    }

    pub fn export(&self, phase: PhaseId) -> (Vec<JudgmentRecord>, usize) {
        export_judgments(self.lock().store.records(), phase)
    }

    pub fn test_grades(&self, phase: PhaseId) -> Vec<JudgmentRecord> {
        export_test_grades(self.lock().store.records(), phase)
    }

    pub fn records(&self) -> Vec<JudgmentRecord> {
        self.lock().store.records().to_vec()
    }

    /// Remaining need per pool item, net of live reservations.
    pub fn remaining_need(&self, phase: PhaseId) -> BTreeMap<String, u32> {
        self.lock().need(phase)
    }
}

fn token(rng: &mut ChaCha8Rng) -> String {
    hex::encode(rng.gen::<[u8; 8]>())
}

impl Inner {
    fn session(&self, id: &str) -> Result<&Session, CrowdError> {
        self.sessions
            .get(id)
            .ok_or_else(|| CrowdError::UnknownSession(id.to_string()))
    }

    fn pool(&self, phase: PhaseId) -> Result<&PhasePool, CrowdError> {
        self.phases.get(&phase).ok_or(CrowdError::UnknownPhase(phase))
    }

    fn need(&self, phase: PhaseId) -> BTreeMap<String, u32> {
        let Some(pool) = self.phases.get(&phase) else {
            return BTreeMap::new();
        };
        let mut have: BTreeMap<&str, u32> = BTreeMap::new();
        for r in self.store.records() {
            if r.phase == phase && r.is_usable() {
                *have.entry(r.item_id.as_str()).or_default() += 1;
            }
        }
        let per_item = schema_for(phase).judgments_per_item;
        pool.items
            .keys()
            .map(|id| {
                let used = have.get(id.as_str()).copied().unwrap_or(0)
                    + self.reserved.get(&(phase, id.clone())).copied().unwrap_or(0);
                (id.clone(), per_item.saturating_sub(used))
            })
            .collect()
    }

    fn start_session(&mut self, worker_id: &str, phase: PhaseId) -> Result<SessionView, CrowdError> {
        self.pool(phase)?;
        let worker = match self.store.worker(worker_id, phase) {
            Some(w) if w.status == WorkerStatus::Rejected => {
                return Err(CrowdError::WorkerRejected(worker_id.to_string()))
            }
            Some(w) => w.clone(),
            None => Worker::new(worker_id, phase),
        };

        let mut busy: BTreeSet<&str> = BTreeSet::new();
        for s in self.sessions.values() {
            if s.worker_id == worker_id && matches!(s.state, SessionState::InQuiz | SessionState::Active) {
                busy.extend(s.item_ids());
            }
        }
        let unseen = |id: &str| !busy.contains(id) && !self.store.has_judged(worker_id, id);
        let candidates: Vec<Candidate> = self
            .need(phase)
            .into_iter()
            .filter(|(id, _)| unseen(id))
            .map(|(item_id, needed)| Candidate { item_id, needed })
            .collect();
        let pool = self.pool(phase)?;
        let tests: Vec<TestQuestion> = pool.tests.iter().filter(|t| unseen(&t.item.id)).cloned().collect();

        let id = format!("s-{}", token(&mut self.rng));
        let seed = self.rng.gen();
        let pages = compose_pages(&id, &candidates, &tests, seed)?;
        self.store.put_worker(worker)?;
        let session = Session {
            id: id.clone(),
            phase,
            worker_id: worker_id.to_string(),
            pages,
            state: SessionState::InQuiz,
            current_page: 1,
            answered: BTreeSet::new(),
        };
        for slot in session.pages.iter().flat_map(|p| &p.slots).filter(|s| !s.is_test) {
            *self.reserved.entry((phase, slot.item_id.clone())).or_default() += 1;
        }
        log::info!("session {id} for {worker_id} on {phase}: {} pages", session.pages.len());
        let view = self.session_view(&session)?;
        self.sessions.insert(id, session);
        Ok(view)
    }

    fn release(&mut self, phase: PhaseId, item_id: &str) {
        let key = (phase, item_id.to_string());
        if let Some(n) = self.reserved.get_mut(&key) {
            *n -= 1;
            if *n == 0 {
                self.reserved.remove(&key);
            }
        }
    }

    fn close(&mut self, session_id: &str, state: SessionState) {
        let session = self.sessions.get_mut(session_id).expect("checked by caller");
        session.state = state;
        let phase = session.phase;
        let open: Vec<String> = session
            .pages
            .iter()
            .flat_map(|p| &p.slots)
            .filter(|s| !s.is_test && !session.answered.contains(&s.item_id))
            .map(|s| s.item_id.clone())
            .collect();
        for id in open {
            self.release(phase, &id);
        }
    }

    fn check_label(phase: PhaseId, label: ClassLabel) -> Result<(), CrowdError> {
        if schema_for(phase).allows(label) {
            Ok(())
        } else {
            Err(CrowdError::IllegalLabel { label, phase })
        }
    }

    fn submit_quiz(&mut self, session_id: &str, answers: &[ClassLabel]) -> Result<QuizVerdict, CrowdError> {
        let session = self.session(session_id)?;
        if session.state != SessionState::InQuiz {
            return Err(CrowdError::NotInQuiz(session_id.to_string()));
        }
        let slots = session.pages[0].slots.clone();
        if answers.len() != slots.len() {
            return Err(CrowdError::AnswerCount {
                expected: slots.len(),
                got: answers.len(),
            });
        }
        let (phase, worker_id) = (session.phase, session.worker_id.clone());
        for &label in answers {
            Self::check_label(phase, label)?;
        }
        let mut correct = 0;
        for (slot, &label) in slots.iter().zip(answers) {
            let ok = slot.expected_labels.as_ref().is_some_and(|e| e.contains(&label));
            correct += ok as usize;
            let record = JudgmentRecord {
                worker_id: worker_id.clone(),
                item_id: slot.item_id.clone(),
                phase,
                label,
                tie_with: None,
                is_test: true,
                correct: Some(ok),
                trusted: true,
                submitted_at: self.clock.now_ms(),
            };
            self.store.append(record)?;
        }
        let threshold = self.config.threshold(phase);
        let score = correct as f64 / slots.len() as f64;
        let mut worker = self
            .store
            .worker(&worker_id, phase)
            .cloned()
            .unwrap_or_else(|| Worker::new(&worker_id, phase));
        worker.eligibility_score = Some(score);
        worker.status = if meets(correct, slots.len(), threshold) {
            WorkerStatus::Eligible
        } else {
            WorkerStatus::Rejected
        };
        let status = worker.status;
        self.store.put_worker(worker)?;

        let session = self.sessions.get_mut(session_id).expect("checked above");
        session.answered.extend(slots.iter().map(|s| s.item_id.clone()));
        let state = if status == WorkerStatus::Rejected {
            self.close(session_id, SessionState::Abandoned);
            SessionState::Abandoned
        } else if session.pages.len() > 1 {
            session.state = SessionState::Active;
            session.current_page = 2;
            SessionState::Active
        } else {
            self.close(session_id, SessionState::Complete);
            SessionState::Complete
        };
        log::info!("quiz {session_id}: {correct}/{} -> {status:?}", slots.len());
        Ok(QuizVerdict {
            correct,
            total: slots.len(),
            score,
            threshold,
            status,
            state,
        })
    }

    fn submit(&mut self, session_id: &str, item_id: &str, label: ClassLabel) -> Result<JudgmentRecord, CrowdError> {
        let session = self.session(session_id)?;
        if session.state != SessionState::Active {
            return Err(CrowdError::NotActive(session_id.to_string()));
        }
        let (phase, worker_id, page_no) = (session.phase, session.worker_id.clone(), session.current_page);
        let mut worker = self
            .store
            .worker(&worker_id, phase)
            .cloned()
            .unwrap_or_else(|| Worker::new(&worker_id, phase));
        if worker.status == WorkerStatus::Rejected {
            return Err(CrowdError::WorkerRejected(worker_id));
        }
        Self::check_label(phase, label)?;
        let slot = session
            .page(page_no)
            .and_then(|p| p.slot(item_id))
            .cloned()
            .ok_or_else(|| CrowdError::NotOnPage {
                item_id: item_id.to_string(),
                page: page_no,
            })?;
        if self.store.has_judged(&worker_id, item_id) {
            return Err(CrowdError::Duplicate {
                worker_id,
                item_id: item_id.to_string(),
            });
        }

        let correct = slot.expected_labels.as_ref().map(|e| e.contains(&label));
        if let Some(ok) = correct {
            let (mut right, mut total) = (ok as usize, 1);
            for r in self.store.records() {
                if r.worker_id == worker_id && r.phase == phase && r.is_test {
                    total += 1;
                    right += (r.correct == Some(true)) as usize;
                }
            }
            if !worker.flagged && !meets(right, total, self.config.threshold(phase)) {
                log::warn!("worker {worker_id} fell below the test threshold on {phase}");
                worker.flagged = true;
            }
        }
        let record = JudgmentRecord {
            worker_id: worker_id.clone(),
            item_id: item_id.to_string(),
            phase,
            label,
            tie_with: None,
            is_test: slot.is_test,
            correct,
            trusted: !worker.flagged,
            submitted_at: self.clock.now_ms(),
        };
        self.store.append(record.clone())?;
        self.store.put_worker(worker)?;
        if !slot.is_test {
            self.release(phase, item_id);
        }

        let session = self.sessions.get_mut(session_id).expect("checked above");
        session.answered.insert(item_id.to_string());
        while session.page_done(session.current_page) && session.current_page < session.pages.len() {
            session.current_page += 1;
        }
        if session.page_done(session.pages.len()) {
            session.state = SessionState::Complete;
        }
        Ok(record)
    }

    fn view(&self, session: &Session, n: usize) -> Result<PageView, CrowdError> {
        let pool = self.pool(session.phase)?;
        let page = session.page(n).ok_or(CrowdError::NoSuchPage {
            page: n,
            pages: session.pages.len(),
        })?;
        let text = |id: &str| {
            pool.items
                .get(id)
                .map(|i| i.text.clone())
                .or_else(|| pool.tests.iter().find(|t| t.item.id == id).map(|t| t.item.text.clone()))
                .unwrap_or_default()
        };
        Ok(PageView {
            session_id: session.id.clone(),
            page_number: n,
            page_count: session.pages.len(),
            title: pool.job.title.clone(),
            instructions: pool.job.instructions.clone(),
            labels: pool.job.labels.clone(),
            items: page
                .slots
                .iter()
                .map(|s| PageItem {
                    item_id: s.item_id.clone(),
                    text: text(&s.item_id),
                })
                .collect(),
        })
    }

    fn session_view(&self, session: &Session) -> Result<SessionView, CrowdError> {
        Ok(SessionView {
            session_id: session.id.clone(),
            worker_id: session.worker_id.clone(),
            phase: session.phase,
            state: session.state,
            current_page: session.current_page,
            page_count: session.pages.len(),
            answered: session.answered.len(),
            page: self.view(session, session.current_page)?,
        })
    }
}
