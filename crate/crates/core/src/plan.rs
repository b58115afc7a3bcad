//! Episodes, plans, and plan edits.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Params;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpisodeId(pub String);

impl EpisodeId {
    pub fn from_counter(n: u64) -> Self {
        Self(format!("e{n}"))
    }
}

impl fmt::Display for EpisodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Pending,
    Active,
    Done,
    Removed,
    Failed,
}

/// Completion metadata for one executed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: EpisodeId,
    pub tool: String,
    pub params: Params,
    pub started_step: u64,
    pub finished_step: u64,
    pub input_fingerprint: String,
    pub output_fingerprint: String,
    /// Sequence number of the `tool_invoked` event holding the final report.
    pub report_ref: Option<u64>,
    pub retry_count: u32,
    pub succeeded: bool,
    pub rows_before: usize,
    pub rows_after: usize,
    pub columns_before: Vec<String>,
    pub columns_after: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: EpisodeId,
    pub goal: String,
    pub tool: String,
    #[serde(default)]
    pub params: Params,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<EpisodeMeta>,
    /// Semantic key of the issue this episode addresses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addresses: Option<String>,
}

/// An episode proposed by a planner before the session assigns it an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewEpisode {
    pub goal: String,
    pub tool: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addresses: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanEditOp {
    /// Rewrites the relative order of the listed pending episodes.
    Reorder { order: Vec<EpisodeId> },
    Remove { episode: EpisodeId },
    /// Inserts before `before`, or appends when `before` is absent.
    Add {
        episode: NewEpisode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        before: Option<EpisodeId>,
    },
    Modify { episode: EpisodeId, params: Params },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEdit {
    #[serde(flatten)]
    pub op: PlanEditOp,
    #[serde(default)]
    pub justification: String,
}

impl PlanEdit {
    pub fn new(op: PlanEditOp, justification: impl Into<String>) -> Self {
        Self { op, justification: justification.into() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("unknown episode {0}")]
    UnknownEpisode(EpisodeId),
    #[error("episode {0} is not pending")]
    NotPending(EpisodeId),
    #[error("another episode ({0}) is already active")]
    AlreadyActive(EpisodeId),
    #[error("reorder must list distinct pending episodes")]
    BadReorder,
    #[error("episode {0} marked done without completion metadata")]
    MissingCompletion(EpisodeId),
}

/// Ordered, editable list of episodes. Every edit bumps `revision`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub episodes: Vec<Episode>,
    pub revision: u64,
}

impl Plan {
    pub fn get(&self, id: &EpisodeId) -> Option<&Episode> {
        self.episodes.iter().find(|e| &e.id == id)
    }

    fn index_of(&self, id: &EpisodeId) -> Result<usize, PlanError> {
        self.episodes.iter().position(|e| &e.id == id).ok_or_else(|| PlanError::UnknownEpisode(id.clone()))
    }

    pub fn pending(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().filter(|e| e.status == EpisodeStatus::Pending)
    }

    pub fn has_pending(&self) -> bool {
        self.pending().next().is_some()
    }

    pub fn head(&self) -> Option<&Episode> {
        self.pending().next()
    }

    pub fn active(&self) -> Option<&Episode> {
        self.episodes.iter().find(|e| e.status == EpisodeStatus::Active)
    }

    /// Strictly greater than any previous revision, also across restores.
    pub fn bump_to(&mut self, floor: u64) {
        self.revision = self.revision.max(floor) + 1;
    }

    /// Applies a planner edit. `Add` needs the id the session assigned.
    pub fn apply(&mut self, edit: &PlanEdit, new_id: impl FnOnce() -> EpisodeId) -> Result<Option<EpisodeId>, PlanError> {
        let mut added = None;
        match &edit.op {
            PlanEditOp::Reorder { order } => {
                let mut slots = Vec::with_capacity(order.len());
                for id in order {
                    let i = self.index_of(id)?;
                    if self.episodes[i].status != EpisodeStatus::Pending || slots.contains(&i) {
                        return Err(PlanError::BadReorder);
                    }
                    slots.push(i);
                }
                let moved: Vec<Episode> = slots.iter().map(|&i| self.episodes[i].clone()).collect();
                let mut sorted = slots.clone();
                sorted.sort_unstable();
                for (slot, ep) in sorted.into_iter().zip(moved) {
                    self.episodes[slot] = ep;
                }
            }
            PlanEditOp::Remove { episode } => {
                let i = self.index_of(episode)?;
                if self.episodes[i].status != EpisodeStatus::Pending {
                    return Err(PlanError::NotPending(episode.clone()));
                }
                self.episodes[i].status = EpisodeStatus::Removed;
            }
            PlanEditOp::Add { episode, before } => {
                let pos = match before {
                    Some(b) => self.index_of(b)?,
                    None => self.episodes.len(),
                };
                let id = new_id();
                self.episodes.insert(
                    pos,
                    Episode {
                        id: id.clone(),
                        goal: episode.goal.clone(),
                        tool: episode.tool.clone(),
                        params: episode.params.clone(),
                        status: EpisodeStatus::Pending,
                        completion: None,
                        addresses: episode.addresses.clone(),
                    },
                );
                added = Some(id);
            }
            PlanEditOp::Modify { episode, params } => {
                let i = self.index_of(episode)?;
                if self.episodes[i].status != EpisodeStatus::Pending {
                    return Err(PlanError::NotPending(episode.clone()));
                }
                for (k, v) in params {
                    self.episodes[i].params.insert(k.clone(), v.clone());
                }
            }
        }
        self.revision += 1;
        Ok(added)
    }

    pub fn activate(&mut self, id: &EpisodeId) -> Result<(), PlanError> {
        if let Some(a) = self.active() {
            return Err(PlanError::AlreadyActive(a.id.clone()));
        }
        let i = self.index_of(id)?;
        if self.episodes[i].status != EpisodeStatus::Pending {
            return Err(PlanError::NotPending(id.clone()));
        }
        self.episodes[i].status = EpisodeStatus::Active;
        self.revision += 1;
        Ok(())
    }

    /// Moves an episode to `Done` or `Failed`; `Done` requires metadata.
    pub fn finish(&mut self, id: &EpisodeId, status: EpisodeStatus, meta: Option<EpisodeMeta>) -> Result<(), PlanError> {
        let i = self.index_of(id)?;
        if status == EpisodeStatus::Done && meta.is_none() {
            return Err(PlanError::MissingCompletion(id.clone()));
        }
        self.episodes[i].status = status;
        self.episodes[i].completion = meta;
        self.revision += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn new_ep(tool: &str) -> NewEpisode {
        NewEpisode { goal: format!("run {tool}"), tool: tool.into(), params: Params::new(), addresses: None }
    }

    fn plan_with(tools: &[&str]) -> (Plan, u64) {
        let mut p = Plan::default();
        let mut n = 0;
        for t in tools {
            n += 1;
            let id = EpisodeId::from_counter(n);
            p.apply(&PlanEdit::new(PlanEditOp::Add { episode: new_ep(t), before: None }, ""), || id).unwrap();
        }
        (p, n)
    }

    #[test]
    fn add_before_and_remove() {
        let (mut p, _) = plan_with(&["eda", "train"]);
        p.apply(
            &PlanEdit::new(PlanEditOp::Add { episode: new_ep("impute"), before: Some(EpisodeId("e2".into())) }, ""),
            || EpisodeId("e9".into()),
        )
        .unwrap();
        let tools: Vec<_> = p.episodes.iter().map(|e| e.tool.as_str()).collect();
        assert_eq!(tools, ["eda", "impute", "train"]);
        p.apply(&PlanEdit::new(PlanEditOp::Remove { episode: EpisodeId("e9".into()) }, ""), || unreachable!()).unwrap();
        assert_eq!(p.get(&EpisodeId("e9".into())).unwrap().status, EpisodeStatus::Removed);
        assert_eq!(p.head().unwrap().tool, "eda");
    }

    #[test]
    fn reorder_permutes_listed_slots() {
        let (mut p, _) = plan_with(&["a", "b", "c"]);
        let order = vec![EpisodeId("e3".into()), EpisodeId("e1".into())];
        p.apply(&PlanEdit::new(PlanEditOp::Reorder { order }, ""), || unreachable!()).unwrap();
        let tools: Vec<_> = p.episodes.iter().map(|e| e.tool.as_str()).collect();
        assert_eq!(tools, ["c", "b", "a"]);
    }

    #[test]
    fn single_active_and_done_needs_meta() {
        let (mut p, _) = plan_with(&["a", "b"]);
        let e1 = EpisodeId("e1".into());
        p.activate(&e1).unwrap();
        assert!(matches!(p.activate(&EpisodeId("e2".into())), Err(PlanError::AlreadyActive(_))));
        assert_eq!(p.finish(&e1, EpisodeStatus::Done, None), Err(PlanError::MissingCompletion(e1.clone())));
        p.finish(&e1, EpisodeStatus::Failed, None).unwrap();
        p.activate(&EpisodeId("e2".into())).unwrap();
    }

    #[test]
    fn edits_on_unknown_or_finished_episodes_fail() {
        let (mut p, _) = plan_with(&["a"]);
        let bad = EpisodeId("e7".into());
        assert!(p.apply(&PlanEdit::new(PlanEditOp::Remove { episode: bad }, ""), || unreachable!()).is_err());
        let e1 = EpisodeId("e1".into());
        p.activate(&e1).unwrap();
        assert!(p
            .apply(&PlanEdit::new(PlanEditOp::Modify { episode: e1, params: Params::new() }, ""), || unreachable!())
            .is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Add(usize),
        Remove(usize),
        Reorder(usize, usize),
        Modify(usize),
        Activate(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..10).prop_map(Op::Add),
            (0usize..10).prop_map(Op::Remove),
            (0usize..10, 0usize..10).prop_map(|(a, b)| Op::Reorder(a, b)),
            (0usize..10).prop_map(Op::Modify),
            (0usize..10).prop_map(Op::Activate),
        ]
    }

    proptest! {
        #[test]
        fn revision_strictly_increases(ops in prop::collection::vec(op(), 1..60)) {
            let mut p = Plan::default();
            let mut counter = 0u64;
            for o in ops {
                let before = p.revision;
                let ids: Vec<EpisodeId> = p.episodes.iter().map(|e| e.id.clone()).collect();
                let pick = |i: usize| ids.get(i % ids.len().max(1)).cloned();
                let res = match o {
                    Op::Add(i) => {
                        counter += 1;
                        let id = EpisodeId::from_counter(counter);
                        let before = pick(i);
                        p.apply(&PlanEdit::new(PlanEditOp::Add { episode: new_ep("t"), before }, ""), || id).map(|_| ())
                    }
                    Op::Remove(i) => match pick(i) {
                        Some(id) => p.apply(&PlanEdit::new(PlanEditOp::Remove { episode: id }, ""), || unreachable!()).map(|_| ()),
                        None => continue,
                    },
                    Op::Reorder(a, b) => match (pick(a), pick(b)) {
                        (Some(x), Some(y)) => p.apply(&PlanEdit::new(PlanEditOp::Reorder { order: vec![y, x] }, ""), || unreachable!()).map(|_| ()),
                        _ => continue,
                    },
                    Op::Modify(i) => match pick(i) {
                        Some(id) => p.apply(&PlanEdit::new(PlanEditOp::Modify { episode: id, params: Params::new() }, ""), || unreachable!()).map(|_| ()),
                        None => continue,
                    },
                    Op::Activate(i) => match pick(i) {
                        Some(id) => p.activate(&id),
                        None => continue,
                    },
                };
                if res.is_ok() {
                    prop_assert!(p.revision > before);
                } else {
                    prop_assert_eq!(p.revision, before);
                }
                prop_assert!(p.episodes.iter().filter(|e| e.status == EpisodeStatus::Active).count() <= 1);
            }
        }
    }
}
