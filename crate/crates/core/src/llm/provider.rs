//! Chat-completion providers, retries and the raw-response store.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::{build_prompt, Batch, Condition, PromptTemplate, TemplateError};
use crate::labels::PhaseId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    /// Rate limits, timeouts and server-side failures; worth retrying.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
    #[error("no replay fixture `{key}` in {dir}")]
    FixtureMissing { key: String, dir: String },
}

/// Stateless chat completion: one user message in, text out. Each call is a
/// fresh session.
pub trait Provider: Send + Sync {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError> {
        (**self).complete(model, message)
    }
}

/// Content address of a request.
pub fn fixture_key(model: &str, message: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(message.as_bytes());
    hex::encode(h.finalize())
}

/// Serves recorded responses from `<dir>/<key>.txt`.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayProvider { dir: dir.into() }
    }

    pub fn fixture_path(&self, model: &str, message: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", fixture_key(model, message)))
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError> {
        let path = self.fixture_path(model, message);
        std::fs::read_to_string(&path).map_err(|_| ProviderError::FixtureMissing {
            key: fixture_key(model, message),
            dir: self.dir.display().to_string(),
        })
    }
}

/// Passes calls through and saves every successful response as a replay
/// fixture.
pub struct RecordingProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        RecordingProvider {
            inner,
            dir: dir.into(),
        }
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError> {
        let text = self.inner.complete(model, message)?;
        let path = self.dir.join(format!("{}.txt", fixture_key(model, message)));
        write_atomic(&path, text.as_bytes())
            .map_err(|e| ProviderError::Fatal(format!("saving fixture: {e}")))?;
        Ok(text)
    }
}

/// Returns queued results in order, then a fallback built from the message.
pub struct ScriptedProvider {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    fallback: Box<dyn Fn(&str, &str) -> Result<String, ProviderError> + Send + Sync>,
    calls: AtomicU64,
}

impl ScriptedProvider {
    pub fn new(
        script: impl IntoIterator<Item = Result<String, ProviderError>>,
        fallback: impl Fn(&str, &str) -> Result<String, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedProvider {
            script: Mutex::new(script.into_iter().collect()),
            fallback: Box::new(fallback),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, model: &str, message: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self.script.lock().unwrap().pop_front();
        next.unwrap_or_else(|| (self.fallback)(model, message))
    }
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch, or ticks for a logical clock.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Counts up by one per reading; makes replays byte-stable.
#[derive(Default)]
pub struct LogicalClock(AtomicU64);

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Records requested pauses without waiting.
#[derive(Default)]
pub struct NoSleep(pub Mutex<Vec<Duration>>);

impl Sleeper for NoSleep {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 2_000,
            max_delay_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchStatus {
    Ok,
    Failed,
}

/// Everything sent and received for one batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub condition: String,
    pub model: String,
    pub phase: PhaseId,
    pub batch: usize,
    pub item_ids: Vec<String>,
    pub request: String,
    pub response: Option<String>,
    pub status: BatchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
    pub started_at: u64,
    pub finished_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{path}: {message}")]
    Store { path: String, message: String },
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// One JSON file per batch under `<root>/<condition>/<phase>/`.
#[derive(Debug, Clone)]
pub struct RawStore {
    root: PathBuf,
}

impl RawStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RawStore { root: root.into() }
    }

    pub fn dir(&self, condition: &Condition, phase: PhaseId) -> PathBuf {
        self.root.join(condition.slug()).join(phase.token())
    }

    pub fn path(&self, condition: &Condition, phase: PhaseId, batch: usize) -> PathBuf {
        self.dir(condition, phase).join(format!("batch-{batch:03}.json"))
    }

    pub fn save(&self, condition: &Condition, raw: &RawResponse) -> Result<PathBuf, RunError> {
        let path = self.path(condition, raw.phase, raw.batch);
        let mut bytes = serde_json::to_vec_pretty(raw).expect("raw response serializes");
        bytes.push(b'\n');
        write_atomic(&path, &bytes).map_err(|e| RunError::Store {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(path)
    }

    /// Saved batches for one condition and phase, by ordinal.
    pub fn load(&self, condition: &Condition, phase: PhaseId) -> Result<Vec<RawResponse>, RunError> {
        let dir = self.dir(condition, phase);
        let store_err = |path: &Path, e: &dyn std::fmt::Display| RunError::Store {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| store_err(&dir, &e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| store_err(p, &e))?;
                serde_json::from_str(&text).map_err(|e| store_err(p, &e))
            })
            .collect()
    }
}

pub struct RunContext<'a> {
    pub provider: &'a dyn Provider,
    pub clock: &'a dyn Clock,
    pub sleeper: &'a dyn Sleeper,
    pub retry: RetryPolicy,
    pub store: &'a RawStore,
}

/// Sends each batch in its own session, in order. Each raw artifact is stored
/// before the next batch starts. A batch that keeps failing is stored as
/// failed and the run moves on; a missing replay fixture aborts the run.
pub fn run_condition(
    template: &PromptTemplate,
    batches: &[Batch],
    ctx: &RunContext<'_>,
) -> Result<Vec<RawResponse>, RunError> {
    let mut out = Vec::with_capacity(batches.len());
    for batch in batches {
        let condition = &batch.condition;
        let request = build_prompt(template, batch)?;
        let started_at = ctx.clock.now_ms();
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match ctx.provider.complete(&condition.model, &request) {
                Ok(text) => break Ok(text),
                Err(ProviderError::Transient(msg)) if attempts < ctx.retry.max_attempts => {
                    log::warn!(
                        "{} batch {}: attempt {attempts} failed ({msg}), retrying",
                        condition,
                        batch.ordinal
                    );
                    ctx.sleeper.sleep(ctx.retry.delay(attempts));
                }
                Err(e @ ProviderError::FixtureMissing { .. }) => return Err(e.into()),
                Err(e) => break Err(e),
            }
        };
        if attempts > 1 {
            log::info!("{} batch {}: {} retries", condition, batch.ordinal, attempts - 1);
        }
        let finished_at = ctx.clock.now_ms();
        let (response, status, error) = match result {
            Ok(text) => (Some(text), BatchStatus::Ok, None),
            Err(e) => {
                log::error!("{} batch {} failed: {e}", condition, batch.ordinal);
                (None, BatchStatus::Failed, Some(e.to_string()))
            }
        };
        let raw = RawResponse {
            condition: condition.name(),
            model: condition.model.clone(),
            phase: batch.phase,
            batch: batch.ordinal,
            item_ids: batch.items.iter().map(|i| i.id.clone()).collect(),
            request,
            response,
            status,
            error,
            attempts,
            started_at,
            finished_at,
        };
        ctx.store.save(condition, &raw)?;
        out.push(raw);
    }
    Ok(out)
}
