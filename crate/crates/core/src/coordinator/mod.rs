//! The strategic loop: observe the current state, decide whether to backtrack,
//! and revise the next few plan episodes.

mod observe;
pub mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{ColumnKind, TabularDataset};
use crate::feedback::{Answer, ExpertQuestion, FeedbackItem};
use crate::plan::{EpisodeId, EpisodeMeta, Plan, PlanEdit};
use crate::registry::{Params, ToolCategory, ToolRegistry, ToolReport};
use crate::task::TaskSpec;

pub use observe::{observe, ObserveInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinatorConfig {
    /// Lookahead window M.
    pub lookahead: usize,
    pub min_rows: usize,
    pub max_metric_drop: f64,
    /// Tukey multiplier used by the coordinator's own outlier check.
    pub outlier_k: f64,
    pub imbalance_share: f64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self { lookahead: 3, min_rows: 50, max_metric_drop: 0.15, outlier_k: 3.0, imbalance_share: 0.25 }
    }
}

/// Phases in the order issues are worked through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Understanding,
    Formatting,
    Missingness,
    Leakage,
    Quality,
    Modeling,
    Interpretation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub fingerprint: String,
    pub rows: usize,
    pub columns: usize,
    pub missing_cells: usize,
    pub kinds: BTreeMap<String, ColumnKind>,
}

impl DatasetDigest {
    pub fn of(ds: &TabularDataset) -> Self {
        Self {
            fingerprint: ds.fingerprint().to_string(),
            rows: ds.row_count(),
            columns: ds.column_count(),
            missing_cells: ds.total_missing(),
            kinds: ds.columns().iter().map(|c| (c.name.clone(), c.kind)).collect(),
        }
    }
}

/// Where an issue's evidence lives: a logged event or a named rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

impl Evidence {
    pub fn event(seq: u64) -> Self {
        Self { event: Some(seq), rule: None }
    }

    pub fn rule(name: &str) -> Self {
        Self { event: None, rule: Some(name.to_string()) }
    }
}

/// What was observed, with the facts a planner needs to act on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Finding {
    NoEda,
    MultipleFiles { files: usize },
    MultipleMeasurements { id_col: String, time_col: Option<String>, rows: usize, ids: usize },
    CaseVariants { column: String, mapping: BTreeMap<String, String> },
    FreeText { column: String },
    Missing { cells: usize, rows: usize, columns: Vec<String> },
    /// Columns suspected of encoding the outcome. `unasked` have not yet been
    /// put to the expert; `confirmed` were approved for removal.
    Leakage { unasked: Vec<String>, confirmed: Vec<String>, probe_gap: Option<f64> },
    Redundancy { unasked: Vec<String>, confirmed: Vec<String> },
    Outliers { rows: Vec<usize>, columns: Vec<String>, approved: bool },
    NoisyLabels { rows: Vec<usize>, approved: bool },
    ShiftUnchecked,
    Imbalance { minority: String, share: f64 },
    NoModel,
    NoInterpretation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    /// Semantic key; plan episodes reference it through `addresses`.
    pub key: String,
    pub category: ToolCategory,
    pub phase: Phase,
    pub evidence: Evidence,
    pub summary: String,
    pub finding: Finding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    OnTrack,
    Degraded,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub key: String,
    pub reason: String,
    /// Episode identified as the cause, if any.
    pub cause: Option<EpisodeId>,
    /// Step the cause started from; restoring it undoes the cause.
    pub restore_to: Option<u64>,
    /// The cause failed outright, so there is nothing to undo.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub digest: DatasetDigest,
    pub issues: Vec<Issue>,
    pub open_questions: Vec<ExpertQuestion>,
    pub recent_feedback: Vec<FeedbackItem>,
    pub verdict: Verdict,
    pub degradations: Vec<Degradation>,
    pub model_current: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktrackDecision {
    pub flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u64>,
    #[serde(default)]
    pub reason: String,
}

impl BacktrackDecision {
    pub fn none() -> Self {
        Self { flag: false, target: None, reason: String::new() }
    }
}

/// One coordinator decision as produced by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionDocument {
    #[serde(default)]
    pub issues: Vec<String>,
    pub backtrack: BacktrackDecision,
    #[serde(default)]
    pub plan_edits: Vec<PlanEdit>,
    #[serde(default)]
    pub questions: Vec<ExpertQuestion>,
}

/// A question asked during the session and its answer, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: ExpertQuestion,
    pub fingerprint: String,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSummary {
    pub name: String,
    pub category: ToolCategory,
    pub supported: bool,
    pub requires_approval: bool,
    pub report_only: bool,
    pub defaults: Params,
    pub description: String,
}

impl ToolSummary {
    pub fn catalog(registry: &ToolRegistry, task: &TaskSpec) -> Vec<ToolSummary> {
        registry
            .manifests()
            .map(|m| ToolSummary {
                name: m.name.clone(),
                category: m.category,
                supported: m.supports(task.task_kind),
                requires_approval: m.requires_approval,
                report_only: m.report_only,
                defaults: m
                    .param_schema
                    .iter()
                    .filter_map(|(k, s)| s.default.as_ref().filter(|v| !v.is_null()).map(|v| (k.clone(), v.clone())))
                    .collect(),
                description: m.description.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BannedAction {
    pub tool: String,
    pub params: Params,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: u64,
    pub fingerprint: String,
    pub rows: usize,
}

/// Everything a policy sees when deciding. Serializable so an LLM policy
/// receives exactly what the rule policy uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorView {
    pub step: u64,
    pub task: TaskSpec,
    pub config: CoordinatorConfig,
    pub observation: Observation,
    pub plan: Plan,
    pub history: Vec<EpisodeMeta>,
    pub banned: Vec<BannedAction>,
    pub questions: Vec<QuestionRecord>,
    pub tools: Vec<ToolSummary>,
    pub steps: Vec<StepSummary>,
}

impl CoordinatorView {
    pub fn tool(&self, name: &str) -> Option<&ToolSummary> {
        self.tools.iter().find(|t| t.name == name)
    }

    /// Params with the tool's defaults filled in.
    pub fn resolved(&self, tool: &str, params: &Params) -> Params {
        let mut out = self.tool(tool).map(|t| t.defaults.clone()).unwrap_or_default();
        for (k, v) in params {
            if !v.is_null() {
                out.insert(k.clone(), v.clone());
            }
        }
        out
    }

    pub fn is_banned(&self, tool: &str, params: &Params) -> bool {
        let p = self.resolved(tool, params);
        self.banned.iter().any(|b| b.tool == tool && params_equal(&self.resolved(tool, &b.params), &p))
    }
}

/// Parameter maps compared with numbers by value (3 == 3.0).
pub fn params_equal(a: &Params, b: &Params) -> bool {
    a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| values_equal(v, w)))
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| values_equal(v, w)))
        }
        _ => a == b,
    }
}

/// Runs report-only detectors on behalf of `observe`. Implementations
/// memoize by (tool, params, dataset) and log each fresh run.
pub trait Detectors {
    /// Returns the event sequence number holding the report, and the report.
    fn detect(&mut self, tool: &str, params: Params) -> Option<(u64, ToolReport)>;
}

/// β = 1 iff the observation is degraded with a restorable cause.
pub fn assess_backtrack(obs: &Observation) -> BacktrackDecision {
    if obs.verdict != Verdict::Degraded {
        return BacktrackDecision::none();
    }
    match obs.degradations.iter().find(|d| d.restore_to.is_some()) {
        Some(d) => BacktrackDecision {
            flag: true,
            target: d.restore_to,
            reason: format!("{} caused by episode {}", d.reason, d.cause.as_ref().map(|c| c.0.as_str()).unwrap_or("?")),
        },
        None => BacktrackDecision::none(),
    }
}

/// Checks a decision against the view it was made from. The same checks
/// apply whatever policy produced the document.
pub fn validate(doc: &DecisionDocument, view: &CoordinatorView) -> Result<(), String> {
    use crate::plan::PlanEditOp;
    use crate::feedback::QuestionOptions;

    let bt = &doc.backtrack;
    if bt.flag {
        let k = bt.target.ok_or("backtrack flagged without a target step")?;
        if k >= view.step {
            return Err(format!("backtrack target {k} is not before the current step {}", view.step));
        }
        if !view.steps.iter().any(|s| s.step == k) {
            return Err(format!("backtrack target {k} is not a recorded state"));
        }
    } else if bt.target.is_some() {
        return Err("backtrack target given without the flag".into());
    }
    let pending = |id: &EpisodeId| view.plan.pending().any(|e| &e.id == id);
    for edit in &doc.plan_edits {
        match &edit.op {
            PlanEditOp::Reorder { order } => {
                let mut seen = std::collections::BTreeSet::new();
                if let Some(id) = order.iter().find(|id| !pending(id) || !seen.insert(*id)) {
                    return Err(format!("reorder lists {id}, which is not a distinct pending episode"));
                }
            }
            PlanEditOp::Remove { episode } | PlanEditOp::Modify { episode, .. } => {
                if !pending(episode) {
                    return Err(format!("episode {episode} is not pending"));
                }
            }
            PlanEditOp::Add { episode, before } => {
                match view.tool(&episode.tool) {
                    None => return Err(format!("unknown tool '{}'", episode.tool)),
                    Some(t) if !t.supported => {
                        return Err(format!("tool '{}' does not support {:?} tasks", episode.tool, view.task.task_kind))
                    }
                    _ => {}
                }
                if let Some(b) = before {
                    if !pending(b) {
                        return Err(format!("cannot insert before {b}: not pending"));
                    }
                }
            }
        }
    }
    let mut keys = std::collections::BTreeSet::new();
    for q in &doc.questions {
        if q.key.trim().is_empty() {
            return Err("question without a key".into());
        }
        if !keys.insert(q.key.as_str()) {
            return Err(format!("question key '{}' repeated", q.key));
        }
        if view.questions.iter().any(|r| r.question.key == q.key && r.answer.is_none()) {
            return Err(format!("question '{}' is already open", q.key));
        }
        match &q.options {
            QuestionOptions::Columns { proposed } if proposed.is_empty() => {
                return Err(format!("question '{}' proposes no columns", q.key))
            }
            QuestionOptions::Choice { options } if options.is_empty() => {
                return Err(format!("question '{}' offers no options", q.key))
            }
            _ => {}
        }
    }
    for key in &doc.issues {
        if !view.observation.issues.iter().any(|i| &i.key == key) {
            return Err(format!("issue '{key}' is not in the observation"));
        }
    }
    Ok(())
}
