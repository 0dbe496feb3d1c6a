//! Prompted classification with the eight LLM conditions.

pub mod parse;
pub mod prompt;
pub mod provider;

use std::collections::BTreeMap;

pub use parse::{
    parse_response, to_judgment_records, AlignmentReport, Confidence, LineError, LineErrorKind,
    ParseOutcome, ParsedJudgment,
};
pub use prompt::{
    build_prompt, item_key, make_batches, make_batches_sized, Batch, Condition, Learning,
    PromptTemplate, PromptType, TemplateError, BATCH_SIZE,
};
pub use provider::{
    fixture_key, run_condition, BatchStatus, Clock, LogicalClock, NoSleep, Provider,
    ProviderError, RawResponse, RawStore, RecordingProvider, ReplayProvider, RetryPolicy,
    RunContext, RunError, ScriptedProvider, Sleeper, SystemClock, ThreadSleeper,
};

use crate::corpus::Item;
use crate::judgments::JudgmentRecord;
use crate::phases::{Prediction, Provenance};

/// Re-parses stored raw responses. Failed batches contribute nothing.
pub fn parse_raw(raw: &[RawResponse], batches: &[Batch]) -> Vec<(usize, ParseOutcome)> {
    raw.iter()
        .filter(|r| r.status == BatchStatus::Ok)
        .filter_map(|r| {
            let batch = batches.iter().find(|b| b.ordinal == r.batch)?;
            Some((r.batch, parse_response(r.response.as_deref().unwrap_or(""), batch)))
        })
        .collect()
}

/// Rebuilds the batches a raw artifact was produced from.
pub fn batch_for_raw(raw: &RawResponse, condition: &Condition, items: &[Item]) -> Batch {
    let by_id: BTreeMap<&str, &Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    Batch {
        condition: condition.clone(),
        phase: raw.phase,
        ordinal: raw.batch,
        items: raw
            .item_ids
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).map(|i| (*i).clone()))
            .collect(),
    }
}

/// One prediction per (judge, item); tie answers become two-label predictions.
pub fn judgments_to_predictions(records: &[JudgmentRecord]) -> BTreeMap<String, Vec<Prediction>> {
    let mut out: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_usable()) {
        out.entry(r.worker_id.clone()).or_default().push(Prediction::new(
            r.item_id.clone(),
            r.phase,
            r.labels(),
            Provenance::LlmCondition,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemSource;
    use crate::labels::{ClassLabel, PhaseId};

    const TEMPLATE: &str = "Classify as Helpful or Useless.\n{{#examples}}Example: \"Crashes\" is Helpful.\n{{/examples}}Reviews:\n{{items}}";

    fn items(n: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item {
                id: format!("r{i}"),
                phase: PhaseId::P1,
                text: format!("word{i} second third fourth"),
                source: ItemSource::Review(format!("r{i}")),
            })
            .collect()
    }

    /// Answers every numbered line of the prompt with Helpful.
    fn echo(_model: &str, message: &str) -> Result<String, ProviderError> {
        Ok(message
            .lines()
            .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
            .map(|l| {
                let (n, text) = l.split_once(". ").unwrap();
                let key: Vec<&str> = text.split_whitespace().take(3).collect();
                format!("{n}. Review: {} | Judgment: Helpful | Confidence: High\n", key.join(" "))
            })
            .collect())
    }

    fn setup() -> (PromptTemplate, Condition) {
        let c = Condition::new(PromptType::Engineered, Learning::ZeroShot, "gpt-4o");
        let t = PromptTemplate::parse(TEMPLATE, PhaseId::P1, PromptType::Engineered, Learning::FewShot)
            .unwrap();
        (t, c)
    }

    #[test]
    fn retries_transient_failures() {
        let (t, c) = setup();
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::new(dir.path());
        let provider = ScriptedProvider::new(
            [
                Err(ProviderError::Transient("429".into())),
                Err(ProviderError::Transient("503".into())),
            ],
            echo,
        );
        let sleeper = NoSleep::default();
        let clock = LogicalClock::new();
        let ctx = RunContext {
            provider: &provider,
            clock: &clock,
            sleeper: &sleeper,
            retry: RetryPolicy::default(),
            store: &store,
        };
        let batches = make_batches(&items(3), PhaseId::P1, &c);
        let raw = run_condition(&t, &batches, &ctx).unwrap();
        assert_eq!(raw.len(), 1);
        assert_eq!(raw[0].attempts, 3);
        assert_eq!(raw[0].status, BatchStatus::Ok);
        assert_eq!(sleeper.0.lock().unwrap().len(), 2);
        assert_eq!(store.load(&c, PhaseId::P1).unwrap(), raw);
        let parsed = parse_raw(&raw, &batches);
        assert_eq!(parsed[0].1.judgments.len(), 3);
        assert!(parsed[0].1.alignment.is_clean());
    }

    #[test]
    fn exhausted_retries_mark_batch_failed_and_continue() {
        let (t, c) = setup();
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::new(dir.path());
        let provider = ScriptedProvider::new(
            (0..4).map(|_| Err(ProviderError::Transient("429".into()))),
            echo,
        );
        let ctx = RunContext {
            provider: &provider,
            clock: &LogicalClock::new(),
            sleeper: &NoSleep::default(),
            retry: RetryPolicy::default(),
            store: &store,
        };
        let batches = make_batches_sized(&items(4), PhaseId::P1, &c, 2);
        let raw = run_condition(&t, &batches, &ctx).unwrap();
        assert_eq!(raw[0].status, BatchStatus::Failed);
        assert_eq!(raw[1].status, BatchStatus::Ok);
        assert_eq!(parse_raw(&raw, &batches).len(), 1);
    }

    #[test]
    fn replay_is_byte_identical() {
        let (t, c) = setup();
        let fixtures = tempfile::tempdir().unwrap();
        let batches = make_batches_sized(&items(5), PhaseId::P1, &c, 2);
        let record = |out: &std::path::Path, provider: &dyn Provider| {
            let store = RawStore::new(out);
            let ctx = RunContext {
                provider,
                clock: &LogicalClock::new(),
                sleeper: &NoSleep::default(),
                retry: RetryPolicy::default(),
                store: &store,
            };
            run_condition(&t, &batches, &ctx).unwrap();
        };
        let live = RecordingProvider::new(ScriptedProvider::new([], echo), fixtures.path());
        let first = tempfile::tempdir().unwrap();
        record(first.path(), &live);
        let second = tempfile::tempdir().unwrap();
        record(second.path(), &ReplayProvider::new(fixtures.path()));
        let read = |root: &std::path::Path| {
            (1..=3)
                .map(|b| std::fs::read(RawStore::new(root).path(&c, PhaseId::P1, b)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(read(first.path()), read(second.path()));

        let empty = tempfile::tempdir().unwrap();
        let store = RawStore::new(empty.path());
        let ctx = RunContext {
            provider: &ReplayProvider::new(empty.path().join("none")),
            clock: &LogicalClock::new(),
            sleeper: &NoSleep::default(),
            retry: RetryPolicy::default(),
            store: &store,
        };
        assert!(matches!(
            run_condition(&t, &batches, &ctx),
            Err(RunError::Provider(ProviderError::FixtureMissing { .. }))
        ));
    }

    #[test]
    fn tie_judgments_become_two_label_predictions() {
        let r = JudgmentRecord {
            worker_id: "Eng,Few,4".into(),
            item_id: "s1".into(),
            phase: PhaseId::P3Prime,
            label: ClassLabel::Performance,
            tie_with: Some(ClassLabel::Stability),
            is_test: false,
            correct: None,
            trusted: true,
            submitted_at: 1,
        };
        let p = judgments_to_predictions(&[r]);
        assert_eq!(p["Eng,Few,4"][0].labels.len(), 2);
    }
}
