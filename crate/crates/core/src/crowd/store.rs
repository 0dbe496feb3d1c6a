//! Append-only judgment and worker logs with replay on open.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CrowdError, Worker};
use crate::judgments::JudgmentRecord;
use crate::labels::PhaseId;

pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const WORKERS_FILE: &str = "workers.jsonl";

struct Log {
    path: PathBuf,
    file: File,
}

impl Log {
    fn open(path: PathBuf) -> Result<Self, CrowdError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CrowdError::Store(format!("{}: {e}", path.display())))?;
        Ok(Log { path, file })
    }

    /// One line per record, flushed to disk before returning.
    fn append<T: Serialize>(&mut self, value: &T) -> Result<(), CrowdError> {
        let mut line = serde_json::to_vec(value).expect("record serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| CrowdError::Store(format!("{}: {e}", self.path.display())))
    }
}

/// Reads every complete line. A malformed final line is a write that never
/// finished and is dropped; a malformed line elsewhere is an error.
fn replay<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CrowdError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CrowdError::Store(format!("{}: {e}", path.display()))),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| CrowdError::Store(format!("{}: {e}", path.display())))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if Some(i) == last => {
                log::warn!("{}: dropping torn final line: {e}", path.display());
                truncate_to_lines(path, &lines[..i])?;
            }
            Err(e) => {
                return Err(CrowdError::Store(format!("{}:{}: {e}", path.display(), i + 1)))
            }
        }
    }
    Ok(out)
}

fn truncate_to_lines(path: &Path, keep: &[String]) -> Result<(), CrowdError> {
    let mut text = String::new();
    for l in keep {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CrowdError::Store(format!("{}: {e}", path.display())))
}

/// All judgments and worker states of a crowd deployment. With a directory
/// every change is appended to disk before it is acknowledged.
#[derive(Default)]
pub struct JudgmentStore {
    records: Vec<JudgmentRecord>,
    judged: BTreeSet<(String, String)>,
    workers: BTreeMap<(String, PhaseId), Worker>,
    judgment_log: Option<Log>,
    worker_log: Option<Log>,
}

impl JudgmentStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, CrowdError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CrowdError::Store(format!("{}: {e}", dir.display())))?;
        let mut store = JudgmentStore::default();
        for r in replay::<JudgmentRecord>(&dir.join(JUDGMENTS_FILE))? {
            store.index(r);
        }
        for w in replay::<Worker>(&dir.join(WORKERS_FILE))? {
            store.workers.insert((w.id.clone(), w.phase), w);
        }
        store.judgment_log = Some(Log::open(dir.join(JUDGMENTS_FILE))?);
        store.worker_log = Some(Log::open(dir.join(WORKERS_FILE))?);
        Ok(store)
    }

    fn index(&mut self, r: JudgmentRecord) {
        self.judged.insert((r.worker_id.clone(), r.item_id.clone()));
        self.records.push(r);
    }

    pub fn has_judged(&self, worker_id: &str, item_id: &str) -> bool {
        self.judged.contains(&(worker_id.to_string(), item_id.to_string()))
    }

    /// Persists then indexes; rejects a second judgment of an item by the
    /// same worker.
    pub fn append(&mut self, record: JudgmentRecord) -> Result<(), CrowdError> {
        if self.has_judged(&record.worker_id, &record.item_id) {
            return Err(CrowdError::Duplicate {
                worker_id: record.worker_id,
                item_id: record.item_id,
            });
        }
        if let Some(log) = &mut self.judgment_log {
            log.append(&record)?;
        }
        self.index(record);
        Ok(())
    }

    pub fn records(&self) -> &[JudgmentRecord] {
        &self.records
    }

    pub fn worker(&self, id: &str, phase: PhaseId) -> Option<&Worker> {
        self.workers.get(&(id.to_string(), phase))
    }

    pub fn put_worker(&mut self, worker: Worker) -> Result<(), CrowdError> {
        if self.worker(&worker.id, worker.phase) == Some(&worker) {
            return Ok(());
        }
        if let Some(log) = &mut self.worker_log {
            log.append(&worker)?;
        }
        self.workers.insert((worker.id.clone(), worker.phase), worker);
        Ok(())
    }

    pub fn workers(&self) -> impl Iterator<Item = &Worker> {
        self.workers.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::WorkerStatus;
    use crate::labels::ClassLabel;

    fn rec(w: &str, item: &str) -> JudgmentRecord {
        JudgmentRecord {
            worker_id: w.into(),
            item_id: item.into(),
            phase: PhaseId::P2,
            label: ClassLabel::Useless,
            tie_with: None,
            is_test: false,
            correct: None,
            trusted: true,
            submitted_at: 5,
        }
    }

    #[test]
    fn replays_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = JudgmentStore::open(dir.path()).unwrap();
            s.append(rec("w1", "a")).unwrap();
            s.append(rec("w2", "a")).unwrap();
            assert!(matches!(s.append(rec("w1", "a")), Err(CrowdError::Duplicate { .. })));
            let mut w = Worker::new("w1", PhaseId::P2);
            s.put_worker(w.clone()).unwrap();
            w.status = WorkerStatus::Eligible;
            s.put_worker(w).unwrap();
        }
        let s = JudgmentStore::open(dir.path()).unwrap();
        assert_eq!(s.records().len(), 2);
        assert!(s.has_judged("w2", "a"));
        assert_eq!(s.worker("w1", PhaseId::P2).unwrap().status, WorkerStatus::Eligible);
    }

    #[test]
    fn torn_tail_is_dropped_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = JudgmentStore::open(dir.path()).unwrap();
            s.append(rec("w1", "a")).unwrap();
        }
        let path = dir.path().join(JUDGMENTS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"worker_id\":\"w9\",\"ite").unwrap();
        drop(f);
        let mut s = JudgmentStore::open(dir.path()).unwrap();
        assert_eq!(s.records().len(), 1);
        s.append(rec("w2", "b")).unwrap();
        drop(s);
        assert_eq!(JudgmentStore::open(dir.path()).unwrap().records().len(), 2);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("garbage\n{text}")).unwrap();
        assert!(matches!(JudgmentStore::open(dir.path()), Err(CrowdError::Store(_))));
    }
}
