//! Session lifecycle: the decide → (restore | execute) → append loop, expert
//! questions, user controls and the final report.

pub mod expert;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coordinator::{
    observe, rules, validate, BannedAction, CoordinatorConfig, CoordinatorView, DecisionDocument, Detectors,
    ObserveInput, QuestionRecord, StepSummary, ToolSummary,
};
use crate::dataset::{write_csv_path, TabularDataset};
use crate::feedback::{Answer, Author, ExpertQuestion, FeedbackItem};
use crate::llm::{self, LlmProvider, PromptBundle};
use crate::models::FittedModel;
use crate::plan::{EpisodeId, EpisodeMeta, EpisodeStatus, NewEpisode, Plan, PlanEdit, PlanEditOp};
use crate::registry::{AuxInputs, Params, ToolRegistry, ToolReport};
use crate::state::{BankError, EventKind, StateBank, SystemState};
use crate::task::TaskSpec;
use crate::worker::{execute_episode, WorkerContext, DEFAULT_MAX_RETRIES};

pub use expert::{ExpertReply, ExpertScript, ExpertSource, InteractiveExpert, ScriptedExpert};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingFeedback,
    Converged,
    Failed,
    Cancelled,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::Converged | SessionStatus::Failed | SessionStatus::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_iterations: u64,
    pub coordinator: CoordinatorConfig,
    pub seed: u64,
    pub max_retries: u32,
    pub tool_timeout_secs: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            coordinator: CoordinatorConfig::default(),
            seed: 42,
            max_retries: DEFAULT_MAX_RETRIES,
            tool_timeout_secs: 300,
        }
    }
}

#[derive(Clone)]
pub enum Policy {
    Rules,
    Llm(Arc<dyn LlmProvider>),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Rules => "rules".into(),
            Policy::Llm(p) => format!("llm:{}", p.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionInputs {
    pub dataset: TabularDataset,
    pub task: TaskSpec,
    /// Additional source files to merge into `dataset`.
    pub extra_files: Vec<TabularDataset>,
    pub test: Option<TabularDataset>,
}

impl SessionInputs {
    pub fn new(dataset: TabularDataset, task: TaskSpec) -> Self {
        Self { dataset, task, extra_files: Vec::new(), test: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Task(#[from] crate::task::TaskError),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown question '{0}'")]
    UnknownQuestion(String),
    #[error("action not allowed while {0:?}: {1}")]
    Conflict(SessionStatus, String),
    #[error("io: {0}")]
    Io(String),
}

/// What a UI or CLI may ask of a running session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Control {
    Backtrack { target_step: u64 },
    Retry,
    Cancel,
    Approve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub id: String,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub iterations: u64,
    pub step: u64,
    pub fingerprint: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub missing_cells: usize,
    pub metrics: BTreeMap<String, f64>,
    pub plan: Plan,
    pub events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curated_path: Option<PathBuf>,
}

pub const SESSION_FILE: &str = "session.json";
pub const CURATED_FILE: &str = "curated.csv";

pub struct Session {
    id: String,
    status: SessionStatus,
    failure: Option<String>,
    task: TaskSpec,
    config: SessionConfig,
    registry: Arc<ToolRegistry>,
    policy: Policy,
    bank: StateBank,
    plan: Plan,
    history: Vec<EpisodeMeta>,
    questions: Vec<QuestionRecord>,
    feedback: Vec<FeedbackItem>,
    banned: Vec<BannedAction>,
    detector_cache: BTreeMap<String, (u64, ToolReport)>,
    model: Option<(String, FittedModel)>,
    /// Metrics of the latest successful training, keyed by the fingerprint it ran on.
    metrics: Option<(String, BTreeMap<String, f64>)>,
    extra_files: Vec<TabularDataset>,
    test: Option<TabularDataset>,
    episode_counter: u64,
    question_counter: u64,
    iteration: u64,
    cancel: Arc<AtomicBool>,
    workdir: Option<PathBuf>,
}

/// Adapter letting `observe` run report-only tools through the registry.
struct SessionDetectors<'a> {
    bank: &'a mut StateBank,
    cache: &'a mut BTreeMap<String, (u64, ToolReport)>,
    registry: &'a ToolRegistry,
    dataset: &'a TabularDataset,
    task: &'a TaskSpec,
    aux: &'a AuxInputs,
    seed: u64,
}

impl Detectors for SessionDetectors<'_> {
    fn detect(&mut self, tool: &str, params: Params) -> Option<(u64, ToolReport)> {
        let key = format!("{tool}|{}|{}", serde_json::to_string(&params).unwrap_or_default(), self.dataset.fingerprint());
        if let Some(hit) = self.cache.get(&key) {
            return hit.1.is_ok().then(|| hit.clone());
        }
        let (report, used) = match self.registry.invoke(tool, self.dataset, self.task, &params, self.seed, self.aux) {
            Ok(inv) => (inv.report, inv.params),
            Err(e) => {
                let _ = self.bank.log(EventKind::Error, json!({ "stage": "detector", "tool": tool, "message": e.to_string() }));
                return None;
            }
        };
        let seq = self
            .bank
            .log(
                EventKind::ToolInvoked,
                json!({
                    "detector": true,
                    "tool": tool,
                    "params": used,
                    "input_fingerprint": self.dataset.fingerprint(),
                    "output_fingerprint": self.dataset.fingerprint(),
                    "report": report,
                }),
            )
            .ok()?;
        self.cache.insert(key, (seq, report.clone()));
        report.is_ok().then_some((seq, report))
    }
}

impl Session {
    /// Creates the session and records the initial state. With a workdir the
    /// log and snapshots are persisted there.
    pub fn new(
        id: impl Into<String>,
        inputs: SessionInputs,
        config: SessionConfig,
        registry: Arc<ToolRegistry>,
        policy: Policy,
        workdir: Option<&Path>,
    ) -> Result<Self, SessionError> {
        let id = id.into();
        if inputs.extra_files.is_empty() {
            inputs.task.validate(&inputs.dataset)?;
        }
        let bank = match workdir {
            Some(dir) => StateBank::create(dir)?,
            None => StateBank::in_memory(),
        };
        let mut s = Self {
            id,
            status: SessionStatus::Running,
            failure: None,
            task: inputs.task,
            config,
            registry,
            policy,
            bank,
            plan: Plan::default(),
            history: Vec::new(),
            questions: Vec::new(),
            feedback: Vec::new(),
            banned: Vec::new(),
            detector_cache: BTreeMap::new(),
            model: None,
            metrics: None,
            extra_files: inputs.extra_files,
            test: inputs.test,
            episode_counter: 0,
            question_counter: 0,
            iteration: 0,
            cancel: Arc::new(AtomicBool::new(false)),
            workdir: workdir.map(Path::to_path_buf),
        };
        if let Some(dir) = &s.workdir {
            let meta = json!({
                "id": s.id,
                "task": s.task,
                "config": s.config,
                "policy": s.policy.name(),
                "extra_files": s.extra_files.len(),
                "has_test": s.test.is_some(),
            });
            std::fs::write(dir.join(SESSION_FILE), serde_json::to_string_pretty(&meta).expect("meta serializes"))
                .map_err(|e| SessionError::Io(e.to_string()))?;
        }
        let s0 = SystemState {
            step: 0,
            dataset_ref: inputs.dataset.fingerprint().to_string(),
            history_ref: 0,
            plan: Plan::default(),
            episode_meta: Vec::new(),
            tool_set: s.registry.names(),
        };
        s.bank.append_state(s0, &inputs.dataset)?;
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn bank(&self) -> &StateBank {
        &self.bank
    }

    pub fn bank_mut(&mut self) -> &mut StateBank {
        &mut self.bank
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn history(&self) -> &[EpisodeMeta] {
        &self.history
    }

    pub fn questions(&self) -> &[QuestionRecord] {
        &self.questions
    }

    pub fn open_question(&self) -> Option<&ExpertQuestion> {
        self.questions.iter().find(|q| q.answer.is_none()).map(|q| &q.question)
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn banned(&self) -> &[BannedAction] {
        &self.banned
    }

    /// Flag checked by running tools; set it to stop a session from outside.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        self.cancel.clone()
    }

    pub fn current_dataset(&self) -> Arc<TabularDataset> {
        self.bank.current_dataset().expect("session always has a current state")
    }

    fn step_index(&self) -> u64 {
        self.bank.current_step().unwrap_or(0)
    }

    fn aux(&self) -> AuxInputs {
        AuxInputs {
            datasets: self.extra_files.clone(),
            test: self.test.clone(),
            model: self.model.as_ref().map(|(_, m)| m.clone()),
            workdir: self.workdir.as_ref().map(|d| d.join("tools")),
            cancel: Some(self.cancel.clone()),
            timeout: Some(Duration::from_secs(self.config.tool_timeout_secs)),
        }
    }

    fn fail(&mut self, reason: impl Into<String>) -> Result<(), SessionError> {
        let reason = reason.into();
        self.bank.log(EventKind::Error, json!({ "stage": "session", "message": reason }))?;
        self.failure = Some(reason);
        self.finish(SessionStatus::Failed)
    }

    fn finish(&mut self, status: SessionStatus) -> Result<(), SessionError> {
        self.status = status;
        let curated = self.write_outputs()?;
        let report = self.report_with(curated);
        self.bank.log(EventKind::Report, serde_json::to_value(&report).expect("report serializes"))?;
        Ok(())
    }

    fn write_outputs(&self) -> Result<Option<PathBuf>, SessionError> {
        let Some(dir) = &self.workdir else { return Ok(None) };
        let path = dir.join(CURATED_FILE);
        write_csv_path(&self.current_dataset(), &path).map_err(|e| SessionError::Io(e.to_string()))?;
        if let Some((_, m)) = &self.model {
            std::fs::write(dir.join("model.json"), serde_json::to_string_pretty(m).expect("model serializes"))
                .map_err(|e| SessionError::Io(e.to_string()))?;
        }
        Ok(Some(path))
    }

    fn report_with(&self, curated_path: Option<PathBuf>) -> SessionReport {
        let ds = self.current_dataset();
        SessionReport {
            id: self.id.clone(),
            status: self.status,
            failure: self.failure.clone(),
            iterations: self.iteration,
            step: self.step_index(),
            fingerprint: ds.fingerprint().to_string(),
            rows: ds.row_count(),
            columns: ds.column_names().into_iter().map(str::to_string).collect(),
            missing_cells: ds.total_missing(),
            metrics: self.metrics.as_ref().map(|(_, m)| m.clone()).unwrap_or_default(),
            plan: self.plan.clone(),
            events: self.bank.events().len(),
            curated_path,
        }
    }

    pub fn report(&self) -> SessionReport {
        let curated = self.workdir.as_ref().map(|d| d.join(CURATED_FILE)).filter(|p| p.exists());
        self.report_with(curated)
    }

    fn view(&mut self) -> CoordinatorView {
        let ds = self.current_dataset();
        let step = self.step_index();
        let tools = ToolSummary::catalog(&self.registry, &self.task);
        let aux = self.aux();
        let observation = {
            let input = ObserveInput {
                step,
                dataset: &ds,
                task: &self.task,
                config: &self.config.coordinator,
                history: &self.history,
                plan: &self.plan,
                questions: &self.questions,
                feedback: &self.feedback,
                aux_files: self.extra_files.len(),
                has_test: self.test.is_some(),
                tools: &tools,
            };
            let mut det = SessionDetectors {
                bank: &mut self.bank,
                cache: &mut self.detector_cache,
                registry: &self.registry,
                dataset: &ds,
                task: &self.task,
                aux: &aux,
                seed: self.config.seed,
            };
            observe(&input, &mut det)
        };
        let steps = self
            .bank
            .states()
            .iter()
            .map(|s| StepSummary {
                step: s.step,
                fingerprint: s.dataset_ref.clone(),
                rows: self.bank.dataset(&s.dataset_ref).map_or(0, |d| d.row_count()),
            })
            .collect();
        CoordinatorView {
            step,
            task: self.task.clone(),
            config: self.config.coordinator,
            observation,
            plan: self.plan.clone(),
            history: self.history.clone(),
            banned: self.banned.clone(),
            questions: self.questions.clone(),
            tools,
            steps,
        }
    }

    fn decide(&mut self, view: &CoordinatorView) -> Result<DecisionDocument, String> {
        match &self.policy {
            Policy::Rules => {
                let doc = rules::decide(view);
                validate(&doc, view).map(|_| doc).map_err(|e| format!("rule policy produced an invalid decision: {e}"))
            }
            Policy::Llm(provider) => {
                let provider = provider.clone();
                let bundle = PromptBundle::new(view);
                let done = llm::complete(&bundle, provider.as_ref(), &|d| validate(d, view)).map_err(|e| e.to_string())?;
                if let Some(why) = &done.rejected {
                    self.bank
                        .log(EventKind::Error, json!({ "stage": "decision", "message": why, "reprompted": true }))
                        .map_err(|e| e.to_string())?;
                }
                Ok(done.document)
            }
        }
    }

    /// Runs until the session converges, fails, is cancelled, or waits for
    /// an answer the expert source cannot give yet.
    pub fn run(&mut self, expert: &mut dyn ExpertSource) -> Result<SessionReport, SessionError> {
        while self.status == SessionStatus::Running {
            self.step(expert)?;
        }
        Ok(self.report())
    }

    /// One iteration of the outer loop.
    pub fn step(&mut self, expert: &mut dyn ExpertSource) -> Result<(), SessionError> {
        if self.status != SessionStatus::Running {
            return Ok(());
        }
        if self.cancel.load(std::sync::atomic::Ordering::SeqCst) {
            return self.finish(SessionStatus::Cancelled);
        }
        if let Some(q) = self.questions.iter().find(|q| q.answer.is_none() && q.question.blocking).map(|q| q.question.clone()) {
            return match expert.reply(&q) {
                ExpertReply::Answer(a) => self.answer(&q.id, a, Author::Scripted),
                ExpertReply::Wait => {
                    self.status = SessionStatus::AwaitingFeedback;
                    Ok(())
                }
                ExpertReply::Unanswerable => self.fail(format!("no answer for blocking question: {}", q.text)),
            };
        }
        if self.iteration >= self.config.max_iterations {
            return self.fail(format!("max_iterations ({}) reached without convergence", self.config.max_iterations));
        }
        self.iteration += 1;

        let view = self.view();
        let doc = match self.decide(&view) {
            Ok(d) => d,
            Err(e) => return self.fail(e),
        };

        if doc.backtrack.flag {
            let k = doc.backtrack.target.expect("validated");
            return self.backtrack(k, &doc.backtrack.reason, "coordinator");
        }

        let changed = !doc.plan_edits.is_empty() || !doc.questions.is_empty();
        if !doc.plan_edits.is_empty() {
            let mut applied = Vec::new();
            for edit in &doc.plan_edits {
                let counter = &mut self.episode_counter;
                let added = self
                    .plan
                    .apply(edit, || {
                        *counter += 1;
                        EpisodeId::from_counter(*counter)
                    })
                    .map_err(|e| SessionError::Invalid(e.to_string()))?;
                applied.push(json!({ "edit": edit, "episode": added }));
            }
            self.bank.log(
                EventKind::PlanEdited,
                json!({ "revision": self.plan.revision, "edits": applied, "issues": doc.issues, "initiator": "coordinator" }),
            )?;
        }
        let mut blocking = false;
        for mut q in doc.questions {
            self.question_counter += 1;
            q.id = format!("q{}", self.question_counter);
            blocking |= q.blocking;
            self.bank.log(EventKind::QuestionAsked, json!({ "question": q, "step": view.step }))?;
            self.questions.push(QuestionRecord {
                question: q,
                fingerprint: view.observation.digest.fingerprint.clone(),
                step: view.step,
                answer: None,
            });
        }
        if blocking {
            return Ok(());
        }

        let obs = &view.observation;
        if !changed
            && !self.plan.has_pending()
            && obs.verdict == crate::coordinator::Verdict::OnTrack
            && obs.model_current
            && obs.issues.is_empty()
        {
            return self.finish(SessionStatus::Converged);
        }

        match self.plan.head().map(|e| e.id.clone()) {
            Some(id) => self.execute(&id),
            None if changed => Ok(()),
            None => self.fail("stalled: no applicable action and no pending episode"),
        }
    }

    fn execute(&mut self, id: &EpisodeId) -> Result<(), SessionError> {
        let ds = self.current_dataset();
        let step = self.step_index();
        let aux = self.aux();
        let ctx = WorkerContext {
            registry: &self.registry,
            task: &self.task,
            aux: &aux,
            seed: self.config.seed,
            max_retries: self.config.max_retries,
        };
        let outcome = execute_episode(&ctx, &mut self.bank, &mut self.plan, id, &ds, step).map_err(|e| SessionError::Invalid(e.to_string()))?;
        if outcome.succeeded() {
            if let Some(model) = outcome.model {
                self.model = Some((outcome.meta.input_fingerprint.clone(), model));
            }
            if outcome.meta.tool == "train_evaluate" {
                self.metrics = Some((outcome.meta.input_fingerprint.clone(), outcome.report.metrics.clone()));
            }
        } else {
            self.banned.push(BannedAction {
                tool: outcome.meta.tool.clone(),
                params: self.plan.get(id).map(|e| e.params.clone()).unwrap_or_default(),
                reason: format!("episode {} failed", id),
            });
        }
        self.history.push(outcome.meta);
        let state = SystemState {
            step: step + 1,
            dataset_ref: outcome.dataset.fingerprint().to_string(),
            history_ref: 0,
            plan: self.plan.clone(),
            episode_meta: self.history.clone(),
            tool_set: self.registry.names(),
        };
        self.bank.append_state(state, &outcome.dataset)?;
        Ok(())
    }

    fn backtrack(&mut self, k: u64, reason: &str, initiator: &str) -> Result<(), SessionError> {
        let banned = if initiator == "coordinator" {
            self.history.iter().find(|m| m.succeeded && m.started_step == k).map(|m| BannedAction {
                tool: m.tool.clone(),
                params: self.plan.get(&m.episode_id).map(|e| e.params.clone()).unwrap_or_else(|| m.params.clone()),
                reason: reason.to_string(),
            })
        } else {
            None
        };
        let restored = self.bank.restore_with(
            k,
            json!({ "reason": reason, "initiator": initiator, "banned": banned.as_ref().map(|b| json!({"tool": b.tool, "params": b.params})) }),
        )?;
        let revision = self.plan.revision;
        self.plan = restored.plan;
        self.plan.bump_to(revision);
        self.history = restored.episode_meta;
        if let Some(b) = banned {
            self.banned.push(b);
        }
        Ok(())
    }

    /// Records an answer to an open question and resumes the loop.
    pub fn answer(&mut self, question_id: &str, answer: Answer, author: Author) -> Result<(), SessionError> {
        if self.status.is_terminal() {
            return Err(SessionError::Conflict(self.status, "session has ended".into()));
        }
        let step = self.step_index();
        let rec = self
            .questions
            .iter_mut()
            .find(|q| q.question.id == question_id)
            .ok_or_else(|| SessionError::UnknownQuestion(question_id.to_string()))?;
        if rec.answer.is_some() {
            return Err(SessionError::Conflict(self.status, format!("question {question_id} is already answered")));
        }
        rec.question.validate_answer(&answer).map_err(|e| SessionError::Invalid(e.to_string()))?;
        rec.answer = Some(answer.clone());
        let item = FeedbackItem {
            question_id: question_id.to_string(),
            question_key: rec.question.key.clone(),
            question: rec.question.text.clone(),
            answer,
            author,
            step,
        };
        self.bank.log(EventKind::FeedbackReceived, serde_json::to_value(&item).expect("feedback serializes"))?;
        self.feedback.push(item);
        if self.status == SessionStatus::AwaitingFeedback && !self.questions.iter().any(|q| q.answer.is_none() && q.question.blocking) {
            self.status = SessionStatus::Running;
        }
        Ok(())
    }

    /// Applies a user control action.
    pub fn control(&mut self, control: &Control) -> Result<(), SessionError> {
        if self.status.is_terminal() {
            return Err(SessionError::Conflict(self.status, "session has ended".into()));
        }
        match control {
            Control::Cancel => {
                self.cancel.store(true, std::sync::atomic::Ordering::SeqCst);
                self.finish(SessionStatus::Cancelled)
            }
            Control::Approve => {
                let q = self
                    .open_question()
                    .cloned()
                    .ok_or_else(|| SessionError::Conflict(self.status, "no open question to approve".into()))?;
                self.answer(&q.id, q.default_approval(), Author::Expert)
            }
            Control::Backtrack { target_step } => {
                let current = self.step_index();
                if *target_step >= current {
                    return Err(SessionError::Conflict(self.status, format!("step {target_step} is not before the current step {current}")));
                }
                self.backtrack(*target_step, "requested by user", "user")
            }
            Control::Retry => {
                let last = self
                    .history
                    .iter()
                    .rev()
                    .find(|m| !m.succeeded)
                    .cloned()
                    .ok_or_else(|| SessionError::Conflict(self.status, "no failed episode to retry".into()))?;
                let original = self.plan.get(&last.episode_id).cloned();
                let params = original.as_ref().map(|e| e.params.clone()).unwrap_or_else(|| last.params.clone());
                self.banned.retain(|b| !(b.tool == last.tool && crate::coordinator::params_equal(&b.params, &params)));
                let edit = PlanEdit::new(
                    PlanEditOp::Add {
                        episode: NewEpisode {
                            goal: original.as_ref().map(|e| e.goal.clone()).unwrap_or_else(|| format!("retry {}", last.tool)),
                            tool: last.tool.clone(),
                            params,
                            addresses: original.and_then(|e| e.addresses),
                        },
                        before: self.plan.head().map(|e| e.id.clone()),
                    },
                    format!("user retry of {}", last.episode_id),
                );
                let counter = &mut self.episode_counter;
                let added = self
                    .plan
                    .apply(&edit, || {
                        *counter += 1;
                        EpisodeId::from_counter(*counter)
                    })
                    .map_err(|e| SessionError::Invalid(e.to_string()))?;
                self.bank.log(
                    EventKind::PlanEdited,
                    json!({ "revision": self.plan.revision, "edits": [{ "edit": edit, "episode": added }], "issues": [], "initiator": "user" }),
                )?;
                if self.status == SessionStatus::AwaitingFeedback && self.open_question().is_none() {
                    self.status = SessionStatus::Running;
                }
                Ok(())
            }
        }
    }

    /// Episodes in the current plan that failed.
    pub fn failed_episodes(&self) -> Vec<&EpisodeId> {
        self.plan.episodes.iter().filter(|e| e.status == EpisodeStatus::Failed).map(|e| &e.id).collect()
    }

    /// Summary JSON for listings.
    pub fn summary(&self) -> Value {
        json!({
            "id": self.id,
            "status": self.status,
            "failure": self.failure,
            "iteration": self.iteration,
            "step": self.step_index(),
            "policy": self.policy.name(),
            "open_question": self.open_question(),
            "task": self.task,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    fn tiny() -> SessionInputs {
        let mut csv = String::from("a,b,y\n");
        for i in 0..60 {
            let a = (i % 10) as f64 * 0.37 + 0.11;
            let b = (i * 7 % 13) as f64 * 0.5 + 0.25;
            let noise = (i * 37 % 11) as f64 * 0.45;
            csv.push_str(&format!("{a:.3},{b:.3},{:.3}\n", a + 0.3 * b + noise + 0.05));
        }
        SessionInputs::new(read_csv_str(&csv).unwrap(), TaskSpec::regression("y"))
    }

    #[test]
    fn clean_regression_converges() {
        let mut s = Session::new("t", tiny(), SessionConfig::default(), Arc::new(ToolRegistry::with_builtins()), Policy::Rules, None).unwrap();
        let r = s.run(&mut ScriptedExpert::empty()).unwrap();
        assert_eq!(r.status, SessionStatus::Converged, "{:?}", r.failure);
        assert_eq!(r.rows, 60);
    }

    #[test]
    fn iteration_cap_fails() {
        let cfg = SessionConfig { max_iterations: 1, ..SessionConfig::default() };
        let mut s = Session::new("t", tiny(), cfg, Arc::new(ToolRegistry::with_builtins()), Policy::Rules, None).unwrap();
        let r = s.run(&mut ScriptedExpert::empty()).unwrap();
        assert_eq!(r.status, SessionStatus::Failed);
        assert!(r.failure.unwrap().contains("max_iterations"));
    }

    #[test]
    fn controls_rejected_after_end() {
        let mut s = Session::new("t", tiny(), SessionConfig::default(), Arc::new(ToolRegistry::with_builtins()), Policy::Rules, None).unwrap();
        s.control(&Control::Cancel).unwrap();
        assert_eq!(s.status(), SessionStatus::Cancelled);
        assert!(matches!(s.control(&Control::Retry), Err(SessionError::Conflict(..))));
    }
}
