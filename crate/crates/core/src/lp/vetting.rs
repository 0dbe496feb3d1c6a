//! Precision vetting rounds for language patterns.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LanguagePattern, LpStatus, MatchResult, PRUNE_THRESHOLD};
use crate::io::{self, RecordError};
use crate::sampling::{stratified_indices, SampleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VettingRecord {
    pub lp_id: String,
    pub round: u32,
    pub sampled_item_ids: Vec<String>,
    pub tp_count: u64,
    pub fp_count: u64,
}

impl VettingRecord {
    pub fn precision(&self) -> Option<f64> {
        let n = self.tp_count + self.fp_count;
        (n > 0).then(|| self.tp_count as f64 / n as f64)
    }

    fn validate(&self) -> Result<(), VettingError> {
        if self.round == 0 {
            return Err(VettingError::BadRound(self.lp_id.clone()));
        }
        if self.tp_count + self.fp_count != self.sampled_item_ids.len() as u64 {
            return Err(VettingError::CountMismatch(self.lp_id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VettingError {
    #[error("no matches to sample")]
    NoMatches,
    #[error("judgment for item `{0}` which was not sampled")]
    Unsampled(String),
    #[error("sampled item `{0}` has no judgment")]
    Unjudged(String),
    #[error("`{0}`: round numbers start at 1")]
    BadRound(String),
    #[error("`{0}`: tp + fp differs from the number of sampled items")]
    CountMismatch(String),
    #[error("pattern `{lp_id}` already vetted in round {round}")]
    Duplicate { lp_id: String, round: u32 },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// Item ids to vet for one pattern. Distinct ids keep first-seen order; above
/// `cap` a seeded stratified sample of exactly `cap` is drawn.
pub fn sample_matches<K, F>(
    results: &[MatchResult],
    cap: usize,
    seed: u64,
    stratum: F,
) -> Result<Vec<String>, VettingError>
where
    K: Ord,
    F: Fn(&str) -> K,
{
    if results.is_empty() {
        return Err(VettingError::NoMatches);
    }
    let mut seen = BTreeSet::new();
    let ids: Vec<&str> = results
        .iter()
        .map(|r| r.item_id.as_str())
        .filter(|id| seen.insert(*id))
        .collect();
    if ids.len() <= cap {
        return Ok(ids.into_iter().map(String::from).collect());
    }
    let picked = stratified_indices(&ids, cap, |id| stratum(id), seed)?;
    Ok(picked.into_iter().map(|i| ids[i].to_string()).collect())
}

pub fn record_vetting(
    lp_id: &str,
    round: u32,
    sampled: &[String],
    judgments: &BTreeMap<String, Verdict>,
) -> Result<VettingRecord, VettingError> {
    let sampled_set: BTreeSet<&str> = sampled.iter().map(String::as_str).collect();
    if let Some(extra) = judgments.keys().find(|k| !sampled_set.contains(k.as_str())) {
        return Err(VettingError::Unsampled(extra.clone()));
    }
    let mut tp = 0;
    let mut fp = 0;
    for id in &sampled_set {
        match judgments.get(*id) {
            Some(Verdict::Tp) => tp += 1,
            Some(Verdict::Fp) => fp += 1,
            None => return Err(VettingError::Unjudged(id.to_string())),
        }
    }
    let record = VettingRecord {
        lp_id: lp_id.to_string(),
        round,
        sampled_item_ids: sampled_set.into_iter().map(String::from).collect(),
        tp_count: tp,
        fp_count: fp,
    };
    record.validate()?;
    Ok(record)
}

/// Applies one round of vetting results. Patterns without a record (or with
/// an empty one) for `round` are returned unchanged.
pub fn prune_catalog(
    catalog: &[LanguagePattern],
    records: &[VettingRecord],
    round: u32,
) -> Vec<LanguagePattern> {
    let by_id: BTreeMap<&str, &VettingRecord> = records
        .iter()
        .filter(|r| r.round == round)
        .map(|r| (r.lp_id.as_str(), r))
        .collect();
    catalog
        .iter()
        .map(|lp| {
            let mut lp = lp.clone();
            if let Some(p) = by_id.get(lp.id.as_str()).and_then(|r| r.precision()) {
                lp.round_precision.insert(round, p);
                lp.status = if p < PRUNE_THRESHOLD {
                    LpStatus::Discarded
                } else {
                    LpStatus::Active
                };
            }
            lp
        })
        .collect()
}

/// sum(tp) / sum(tp + fp) over the records of one round.
pub fn micro_precision(records: &[VettingRecord], round: u32) -> Option<f64> {
    let (tp, n) = records
        .iter()
        .filter(|r| r.round == round)
        .fold((0u64, 0u64), |(tp, n), r| {
            (tp + r.tp_count, n + r.tp_count + r.fp_count)
        });
    (n > 0).then(|| tp as f64 / n as f64)
}

/// Append-only store of vetting records. Owning it through `&mut` keeps a
/// single writer.
#[derive(Debug, Default)]
pub struct VettingLedger {
    path: Option<PathBuf>,
    records: Vec<VettingRecord>,
}

impl VettingLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, VettingError> {
        let records = if path.exists() {
            io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect()
        } else {
            Vec::new()
        };
        Ok(VettingLedger {
            path: Some(path.to_path_buf()),
            records,
        })
    }

    pub fn records(&self) -> &[VettingRecord] {
        &self.records
    }

    pub fn append(&mut self, record: VettingRecord) -> Result<(), VettingError> {
        record.validate()?;
        if self
            .records
            .iter()
            .any(|r| r.lp_id == record.lp_id && r.round == record.round)
        {
            return Err(VettingError::Duplicate {
                lp_id: record.lp_id,
                round: record.round,
            });
        }
        if let Some(path) = &self.path {
            let io_err = |source| {
                VettingError::Record(RecordError::Io {
                    path: path.display().to_string(),
                    source,
                })
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?;
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            f.write_all(&line).map_err(io_err)?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn micro_precision(&self, round: u32) -> Option<f64> {
        micro_precision(&self.records, round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Characteristic;

    fn hits(n: usize) -> Vec<MatchResult> {
        (0..n)
            .map(|i| MatchResult {
                item_id: format!("s{i:03}"),
                lp_id: "lp".into(),
                start: 0,
                end: 1,
                matched_text: "x".into(),
            })
            .collect()
    }

    fn judged(lp: &str, round: u32, tp: usize, fp: usize) -> VettingRecord {
        let ids: Vec<String> = (0..tp + fp).map(|i| format!("{lp}-{i}")).collect();
        let j = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), if i < tp { Verdict::Tp } else { Verdict::Fp }))
            .collect();
        record_vetting(lp, round, &ids, &j).unwrap()
    }

    #[test]
    fn small_result_sets_are_taken_whole() {
        let s = sample_matches(&hits(40), 100, 1, |_| 0).unwrap();
        assert_eq!(s.len(), 40);
        assert!(matches!(
            sample_matches(&[], 100, 1, |_| 0),
            Err(VettingError::NoMatches)
        ));
    }

    #[test]
    fn large_result_sets_are_stratified() {
        let h = hits(250);
        let stratum = |id: &str| id[1..].parse::<usize>().unwrap() % 5;
        let s = sample_matches(&h, 100, 7, stratum).unwrap();
        assert_eq!(s.len(), 100);
        for k in 0..5 {
            assert_eq!(s.iter().filter(|id| stratum(id) == k).count(), 20);
        }
        assert_eq!(s, sample_matches(&h, 100, 7, stratum).unwrap());
    }

    #[test]
    fn judgments_must_cover_sample() {
        let sampled = vec!["a".to_string(), "b".to_string()];
        let mut j = BTreeMap::from([("a".to_string(), Verdict::Tp)]);
        assert!(matches!(
            record_vetting("lp", 1, &sampled, &j),
            Err(VettingError::Unjudged(_))
        ));
        j.insert("c".into(), Verdict::Fp);
        assert!(matches!(
            record_vetting("lp", 1, &sampled, &j),
            Err(VettingError::Unsampled(id)) if id == "c"
        ));
    }

    #[test]
    fn prune_threshold_is_strict() {
        let lps: Vec<LanguagePattern> = ["half", "low", "perfect", "unmatched"]
            .iter()
            .map(|id| LanguagePattern::new(*id, Characteristic::Reliability, "x"))
            .collect();
        let records = vec![
            judged("half", 1, 50, 50),
            judged("low", 1, 2, 3),
            judged("perfect", 1, 100, 0),
        ];
        assert_eq!(records[1].precision(), Some(0.4));
        let pruned = prune_catalog(&lps, &records, 1);
        let status: Vec<LpStatus> = pruned.iter().map(|l| l.status).collect();
        assert_eq!(
            status,
            vec![LpStatus::Active, LpStatus::Discarded, LpStatus::Active, LpStatus::Active]
        );
        assert_eq!(pruned[0].round_precision[&1], 0.5);
        assert!(pruned[3].round_precision.is_empty());
    }

    #[test]
    fn ledger_appends_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vetting.jsonl");
        let mut ledger = VettingLedger::open(&path).unwrap();
        ledger.append(judged("a", 1, 3, 1)).unwrap();
        ledger.append(judged("b", 1, 1, 1)).unwrap();
        assert!(matches!(
            ledger.append(judged("a", 1, 1, 0)),
            Err(VettingError::Duplicate { .. })
        ));
        assert_eq!(ledger.micro_precision(1), Some(4.0 / 6.0));
        let reopened = VettingLedger::open(&path).unwrap();
        assert_eq!(reopened.records(), ledger.records());
    }
}
