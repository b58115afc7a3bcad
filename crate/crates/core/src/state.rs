//! Append-only bank of system states, dataset snapshots, and the event log.
//!
//! On disk a bank directory holds `events.ndjson` (one event per line),
//! `snapshots/<fingerprint>.csv`, and `index.json` (active branch plus the
//! column kinds each snapshot needs to be reloaded exactly).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::{dataset_with_schema, read_raw_path, write_csv_path, ColumnKind, DatasetError, TabularDataset};
use crate::plan::{EpisodeMeta, Plan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub step: u64,
    pub dataset_ref: String,
    /// Number of events in the log when this state was appended.
    pub history_ref: u64,
    pub plan: Plan,
    pub episode_meta: Vec<EpisodeMeta>,
    pub tool_set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StateAppended,
    ToolInvoked,
    QuestionAsked,
    FeedbackReceived,
    Backtrack,
    PlanEdited,
    Error,
    Report,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::StateAppended => "state_appended",
            EventKind::ToolInvoked => "tool_invoked",
            EventKind::QuestionAsked => "question_asked",
            EventKind::FeedbackReceived => "feedback_received",
            EventKind::Backtrack => "backtrack",
            EventKind::PlanEdited => "plan_edited",
            EventKind::Error => "error",
            EventKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: String,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("expected step {expected}, got {found}")]
    NonContiguous { expected: u64, found: u64 },
    #[error("state references dataset {found} but the snapshot given is {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("step {k} out of range (current step {current:?})")]
    OutOfRange { k: u64, current: Option<u64> },
    #[error("bad event record at seq {seq}: {reason}")]
    BadRecord { seq: u64, reason: String },
    #[error("event log has no states")]
    Empty,
    #[error("snapshot {0} not found")]
    MissingSnapshot(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BankError>;

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    active: Vec<IndexEntry>,
    snapshots: BTreeMap<String, SnapshotEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    step: u64,
    dataset_ref: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotEntry {
    file: String,
    kinds: Vec<ColumnKind>,
}

const EVENTS_FILE: &str = "events.ndjson";
const INDEX_FILE: &str = "index.json";
const SNAPSHOT_DIR: &str = "snapshots";

pub struct StateBank {
    dir: Option<PathBuf>,
    active: Vec<SystemState>,
    snapshots: BTreeMap<String, Arc<TabularDataset>>,
    events: Vec<EventRecord>,
    listener: Option<Listener>,
}

type Listener = Box<dyn Fn(&EventRecord) + Send + Sync>;

impl StateBank {
    pub fn in_memory() -> Self {
        Self { dir: None, active: Vec::new(), snapshots: BTreeMap::new(), events: Vec::new(), listener: None }
    }

    /// Called with every event after it is stored.
    pub fn set_listener(&mut self, f: impl Fn(&EventRecord) + Send + Sync + 'static) {
        self.listener = Some(Box::new(f));
    }

    /// New bank persisted under `dir`, which must not already hold a log.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
        let log = dir.join(EVENTS_FILE);
        if log.exists() && fs::metadata(&log)?.len() > 0 {
            return Err(BankError::Io(std::io::Error::new(std::io::ErrorKind::AlreadyExists, "event log already exists")));
        }
        File::create(&log)?;
        let bank = Self { dir: Some(dir), ..Self::in_memory() };
        bank.write_index()?;
        Ok(bank)
    }

    /// Reopens a persisted bank by replaying its event log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let events = read_log(&dir.join(EVENTS_FILE))?;
        let active = replay_branch(&events)?;
        let index: Index = serde_json::from_str(&fs::read_to_string(dir.join(INDEX_FILE))?)?;
        let mut snapshots = BTreeMap::new();
        for (fp, entry) in &index.snapshots {
            let raw = read_raw_path(&dir.join(&entry.file))?;
            let ds = dataset_with_schema(&raw, &entry.kinds)?;
            if ds.fingerprint() != fp {
                return Err(BankError::FingerprintMismatch { expected: fp.clone(), found: ds.fingerprint().to_string() });
            }
            snapshots.insert(fp.clone(), Arc::new(ds));
        }
        for s in &active {
            if !snapshots.contains_key(&s.dataset_ref) {
                return Err(BankError::MissingSnapshot(s.dataset_ref.clone()));
            }
        }
        Ok(Self { dir: Some(dir), active, snapshots, events, listener: None })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn current(&self) -> Option<&SystemState> {
        self.active.last()
    }

    pub fn current_step(&self) -> Option<u64> {
        self.current().map(|s| s.step)
    }

    pub fn states(&self) -> &[SystemState] {
        &self.active
    }

    pub fn state(&self, k: u64) -> Option<&SystemState> {
        self.active.get(k as usize)
    }

    pub fn next_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn dataset(&self, fingerprint: &str) -> Option<Arc<TabularDataset>> {
        self.snapshots.get(fingerprint).cloned()
    }

    pub fn current_dataset(&self) -> Option<Arc<TabularDataset>> {
        self.current().and_then(|s| self.dataset(&s.dataset_ref))
    }

    /// Appends an event and returns its sequence number.
    pub fn log(&mut self, kind: EventKind, payload: Value) -> Result<u64> {
        let seq = self.events.len() as u64;
        let rec = EventRecord { seq, ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true), kind, payload };
        if let Some(dir) = &self.dir {
            let mut f = OpenOptions::new().append(true).open(dir.join(EVENTS_FILE))?;
            writeln!(f, "{}", serde_json::to_string(&rec)?)?;
        }
        if let Some(f) = &self.listener {
            f(&rec);
        }
        self.events.push(rec);
        Ok(seq)
    }

    /// Stores `dataset` (deduplicated by fingerprint) and appends `state`.
    /// `history_ref` is overwritten with the current log length.
    pub fn append_state(&mut self, mut state: SystemState, dataset: &TabularDataset) -> Result<u64> {
        let expected = self.current_step().map_or(0, |s| s + 1);
        if state.step != expected {
            return Err(BankError::NonContiguous { expected, found: state.step });
        }
        if state.dataset_ref != dataset.fingerprint() {
            return Err(BankError::FingerprintMismatch { expected: dataset.fingerprint().to_string(), found: state.dataset_ref });
        }
        if !self.snapshots.contains_key(&state.dataset_ref) {
            if let Some(dir) = &self.dir {
                write_csv_path(dataset, dir.join(snapshot_file(&state.dataset_ref)))?;
            }
            self.snapshots.insert(state.dataset_ref.clone(), Arc::new(dataset.clone()));
        }
        state.history_ref = self.events.len() as u64;
        let step = state.step;
        self.log(EventKind::StateAppended, json!({ "step": step, "state": &state }))?;
        self.active.push(state);
        self.write_index()?;
        Ok(step)
    }

    /// Makes step `k` the head of the active branch. Later states stay in the
    /// log; their snapshots stay stored until pruned.
    pub fn restore(&mut self, k: u64, reason: &str) -> Result<SystemState> {
        self.restore_with(k, json!({ "reason": reason }))
    }

    /// `restore` with extra payload fields for the backtrack event.
    pub fn restore_with(&mut self, k: u64, details: Value) -> Result<SystemState> {
        let current = self.current_step();
        match current {
            Some(c) if k <= c => {}
            _ => return Err(BankError::OutOfRange { k, current }),
        }
        let from = current.unwrap_or(0);
        self.active.truncate(k as usize + 1);
        let mut payload = json!({ "from": from, "to": k });
        if let Value::Object(extra) = details {
            payload.as_object_mut().expect("object literal").extend(extra);
        }
        self.log(EventKind::Backtrack, payload)?;
        self.write_index()?;
        Ok(self.active[k as usize].clone())
    }

    /// Drops snapshots that neither the active branch nor any of its episode
    /// metadata refers to. Returns how many were removed.
    pub fn prune_snapshots(&mut self) -> Result<usize> {
        let mut keep: BTreeSet<&str> = BTreeSet::new();
        for s in &self.active {
            keep.insert(&s.dataset_ref);
            for m in &s.episode_meta {
                keep.insert(&m.input_fingerprint);
                keep.insert(&m.output_fingerprint);
            }
        }
        let drop: Vec<String> = self.snapshots.keys().filter(|k| !keep.contains(k.as_str())).cloned().collect();
        for fp in &drop {
            self.snapshots.remove(fp);
            if let Some(dir) = &self.dir {
                let p = dir.join(snapshot_file(fp));
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        if !drop.is_empty() {
            self.write_index()?;
        }
        Ok(drop.len())
    }

    fn write_index(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let index = Index {
            active: self.active.iter().map(|s| IndexEntry { step: s.step, dataset_ref: s.dataset_ref.clone() }).collect(),
            snapshots: self
                .snapshots
                .iter()
                .map(|(fp, ds)| (fp.clone(), SnapshotEntry { file: snapshot_file(fp), kinds: ds.columns().iter().map(|c| c.kind).collect() }))
                .collect(),
        };
        let tmp = dir.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&index)?)?;
        fs::rename(tmp, dir.join(INDEX_FILE))?;
        Ok(())
    }
}

fn snapshot_file(fp: &str) -> String {
    format!("{SNAPSHOT_DIR}/{fp}.csv")
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| BankError::BadRecord { seq: i as u64, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn replay_branch(events: &[EventRecord]) -> Result<Vec<SystemState>> {
    let mut active: Vec<SystemState> = Vec::new();
    for (i, rec) in events.iter().enumerate() {
        if rec.seq != i as u64 {
            return Err(BankError::BadRecord { seq: rec.seq, reason: format!("expected seq {i}") });
        }
        let bad = |reason: String| BankError::BadRecord { seq: rec.seq, reason };
        match rec.kind {
            EventKind::StateAppended => {
                let state: SystemState = serde_json::from_value(rec.payload["state"].clone()).map_err(|e| bad(e.to_string()))?;
                let expected = active.last().map_or(0, |s| s.step + 1);
                if state.step != expected {
                    return Err(bad(format!("expected step {expected}, got {}", state.step)));
                }
                active.push(state);
            }
            EventKind::Backtrack => {
                let to = rec.payload["to"].as_u64().ok_or_else(|| bad("backtrack without 'to'".into()))?;
                if to as usize >= active.len() {
                    return Err(bad(format!("backtrack to unknown step {to}")));
                }
                active.truncate(to as usize + 1);
            }
            _ => {}
        }
    }
    Ok(active)
}

/// Reconstructs the active-branch head from an event log.
pub fn replay(events: &[EventRecord]) -> Result<SystemState> {
    replay_branch(events)?.pop().ok_or(BankError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;
    use proptest::prelude::*;

    fn ds(v: usize) -> TabularDataset {
        read_csv_str(&format!("a,b\n{v}.5,x\n2.25,y\n")).unwrap()
    }

    fn state(step: u64, d: &TabularDataset) -> SystemState {
        SystemState {
            step,
            dataset_ref: d.fingerprint().to_string(),
            history_ref: 0,
            plan: Plan::default(),
            episode_meta: Vec::new(),
            tool_set: vec!["impute".into()],
        }
    }

    fn bank_with(n: usize) -> StateBank {
        let mut b = StateBank::in_memory();
        for i in 0..n {
            let d = ds(i);
            b.append_state(state(i as u64, &d), &d).unwrap();
        }
        b
    }

    #[test]
    fn append_requires_contiguous_steps() {
        let mut b = StateBank::in_memory();
        let d = ds(0);
        assert_eq!(b.append_state(state(0, &d), &d).unwrap(), 0);
        let mut b = bank_with(4);
        assert_eq!(b.append_state(state(4, &d), &d).unwrap(), 4);
        assert!(matches!(b.append_state(state(9, &d), &d), Err(BankError::NonContiguous { expected: 5, found: 9 })));
    }

    #[test]
    fn restore_current_is_identity_and_out_of_range_fails() {
        let mut b = bank_with(4);
        let before = b.current().unwrap().clone();
        assert_eq!(b.restore(3, "").unwrap(), before);
        assert!(b.restore(7, "").is_err());
        assert!(StateBank::in_memory().restore(0, "").is_err());
    }

    #[test]
    fn identical_snapshots_stored_once() {
        let mut b = StateBank::in_memory();
        let d = ds(1);
        for i in 0..3 {
            b.append_state(state(i, &d), &d).unwrap();
        }
        assert_eq!(b.snapshot_count(), 1);
        assert_eq!(StateBank::in_memory().prune_snapshots().unwrap(), 0);
    }

    #[test]
    fn replay_rejects_gap() {
        let mut b = bank_with(2);
        b.log(EventKind::Report, json!({})).unwrap();
        let mut events = b.events().to_vec();
        events.remove(1);
        match replay(&events) {
            Err(BankError::BadRecord { seq, .. }) => assert_eq!(seq, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn persisted_bank_reopens_to_same_state() {
        let tmp = tempfile::tempdir().unwrap();
        let mut b = StateBank::create(tmp.path()).unwrap();
        for i in 0..4 {
            let d = ds(i);
            b.append_state(state(i as u64, &d), &d).unwrap();
        }
        b.restore(1, "test").unwrap();
        let d = ds(9);
        b.append_state(state(2, &d), &d).unwrap();
        let re = StateBank::open(tmp.path()).unwrap();
        assert_eq!(re.current(), b.current());
        assert_eq!(re.current_dataset().unwrap().fingerprint(), d.fingerprint());
        assert_eq!(re.events().len(), b.events().len());
        let log = fs::read_to_string(tmp.path().join(EVENTS_FILE)).unwrap();
        assert!(!log.contains(tmp.path().to_str().unwrap()));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Append(usize),
        Restore(u64),
        Prune,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => (0usize..6).prop_map(Op::Append),
            1 => (0u64..10).prop_map(Op::Restore),
            1 => Just(Op::Prune),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn restore_is_exact(ops in proptest::collection::vec(op(), 1..30)) {
            let mut b = bank_with(1);
            let mut recorded: Vec<String> = vec![ds(0).fingerprint().to_string()];
            let mut last_seq = 0;
            for o in ops {
                match o {
                    Op::Append(v) => {
                        let d = ds(v);
                        let step = b.current_step().unwrap() + 1;
                        b.append_state(state(step, &d), &d).unwrap();
                        recorded.truncate(step as usize);
                        recorded.push(d.fingerprint().to_string());
                    }
                    Op::Restore(k) => {
                        let cur = b.current_step().unwrap();
                        if k <= cur {
                            let s = b.restore(k, "").unwrap();
                            prop_assert_eq!(&s.dataset_ref, &recorded[k as usize]);
                            prop_assert_eq!(b.current_dataset().unwrap().fingerprint().to_string(), recorded[k as usize].clone());
                            recorded.truncate(k as usize + 1);
                        } else {
                            prop_assert!(b.restore(k, "").is_err());
                        }
                    }
                    Op::Prune => {
                        b.prune_snapshots().unwrap();
                    }
                }
                for (k, fp) in recorded.iter().enumerate() {
                    prop_assert_eq!(b.dataset(fp).unwrap().fingerprint().to_string(), fp.clone());
                    prop_assert_eq!(&b.state(k as u64).unwrap().dataset_ref, fp);
                }
                let seqs: Vec<u64> = b.events().iter().map(|e| e.seq).collect();
                prop_assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
                prop_assert!(seqs.len() as u64 >= last_seq);
                last_seq = seqs.len() as u64;
                prop_assert_eq!(replay(b.events()).unwrap(), b.current().unwrap().clone());
            }
        }
    }
}
