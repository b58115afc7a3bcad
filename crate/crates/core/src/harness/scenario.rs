use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt, CorruptionStep, Truth};
use super::score::{detection, flagged_ids, recovery_score, RecoveryScore};
use super::{gen_clean, CleanSpec, HarnessError};
use crate::llm::{LlmProvider, MockProvider, ReplayProvider};
use crate::registry::ToolRegistry;
use crate::session::{ExpertScript, Policy, ScriptedExpert, Session, SessionConfig, SessionInputs, SessionReport, SessionStatus};
use crate::state::EventRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptSource {
    Path(PathBuf),
    Inline(ExpertScript),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Expectations {
    pub converged: Option<bool>,
    pub one_row_per_id: bool,
    pub columns_absent: Vec<String>,
    pub columns_present: Vec<String>,
    pub max_missing: Option<usize>,
    pub min_rows: Option<usize>,
    /// Generators whose issue must be fixed in the curated data.
    pub fixed: Vec<String>,
    /// Generators the session must have noticed.
    pub detected: Vec<String>,
    /// Minimum share of planted flips flagged by `flag_noisy_labels`.
    pub flip_recall: Option<f64>,
    /// Questions that must have been answered before the named column left
    /// the data.
    pub removed_after_approval: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub clean: CleanSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub corruptions: Vec<CorruptionStep>,
    /// `rules` or `llm`.
    #[serde(default = "default_policy")]
    pub policy: String,
    /// `mock` or `replay` when the policy is `llm`.
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub expert_script: Option<ScriptSource>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub expectations: Expectations,
}

fn default_seed() -> u64 {
    42
}

fn default_policy() -> String {
    "rules".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub session: SessionReport,
    pub recovery: RecoveryScore,
    pub expectations: Vec<ExpectationResult>,
    #[serde(skip)]
    pub events: Vec<EventRecord>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }
}

/// Reads a scenario; relative paths inside it resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Scenario(format!("{}: {e}", path.display())))?;
    let mut sc: Scenario = serde_json::from_str(&text).map_err(|e| HarnessError::Scenario(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(p) = sc.fixture.as_mut() {
        fix(p);
    }
    if let Some(ScriptSource::Path(p)) = sc.expert_script.as_mut() {
        fix(p);
    }
    Ok(sc)
}

fn policy_for(sc: &Scenario, provider: Option<Arc<dyn LlmProvider>>) -> Result<Policy, HarnessError> {
    if let Some(p) = provider {
        return Ok(Policy::Llm(p));
    }
    match (sc.policy.as_str(), sc.provider.as_deref()) {
        ("rules", _) => Ok(Policy::Rules),
        ("llm", Some("mock") | None) => Ok(Policy::Llm(Arc::new(MockProvider))),
        ("llm", Some("replay")) => {
            let path = sc.fixture.as_ref().ok_or_else(|| HarnessError::Scenario("replay provider needs a fixture".into()))?;
            let r = ReplayProvider::from_file(path).map_err(|e| HarnessError::Scenario(e.to_string()))?;
            Ok(Policy::Llm(Arc::new(r)))
        }
        (p, prov) => Err(HarnessError::Scenario(format!("unsupported policy '{p}' with provider {prov:?}"))),
    }
}

fn check(out: &mut Vec<ExpectationResult>, name: &str, passed: bool, detail: String) {
    out.push(ExpectationResult { name: name.into(), passed, detail });
}

/// Generates, corrupts, curates with a headless session and scores.
/// `provider` overrides the scenario's own policy (used for recording).
pub fn run_scenario(
    sc: &Scenario,
    registry: Arc<ToolRegistry>,
    workdir: Option<&Path>,
    provider: Option<Arc<dyn LlmProvider>>,
) -> Result<ScenarioReport, HarnessError> {
    let (clean, task) = gen_clean(&sc.clean, sc.seed)?;
    let corrupted = corrupt(&clean, &task, &sc.corruptions, sc.seed)?;
    let script = match &sc.expert_script {
        None => ExpertScript::default(),
        Some(ScriptSource::Inline(s)) => s.clone(),
        Some(ScriptSource::Path(p)) => ExpertScript::load(p).map_err(|e| HarnessError::Scenario(e.to_string()))?,
    };
    let mut expert = ScriptedExpert::new(script).map_err(|e| HarnessError::Scenario(e.to_string()))?;
    let inputs = SessionInputs {
        dataset: corrupted.train.clone(),
        task: task.clone(),
        extra_files: corrupted.extra_files.clone(),
        test: corrupted.test.clone(),
    };
    let mut config = sc.session.clone();
    config.seed = sc.seed;
    let policy = policy_for(sc, provider)?;
    let mut session = Session::new(sc.name.clone(), inputs, config, registry, policy, workdir)?;
    let report = session.run(&mut expert)?;
    let curated = session.current_dataset();
    let mut recovery = recovery_score(&clean, &corrupted.key, &curated, corrupted.test.as_ref())?;
    let seen = detection(&corrupted.key, session.bank());
    for r in &mut recovery.issue_resolution {
        r.detected = seen.get(&r.generator).copied();
    }
    if !expert.errors.is_empty() {
        recovery.notes.extend(expert.errors.iter().cloned());
    }

    let e = &sc.expectations;
    let mut results = Vec::new();
    if let Some(want) = e.converged {
        let got = report.status == SessionStatus::Converged;
        check(&mut results, "converged", got == want, format!("status {:?}", report.status));
    }
    let id_col = corrupted.key.id_col.clone();
    if e.one_row_per_id {
        let ids: Vec<String> = curated.column_index(&id_col).map(|c| curated.column_cells(c).map(|x| x.render()).collect()).unwrap_or_default();
        let distinct: std::collections::BTreeSet<&String> = ids.iter().collect();
        check(&mut results, "one_row_per_id", !ids.is_empty() && distinct.len() == ids.len(), format!("{} rows, {} ids", ids.len(), distinct.len()));
    }
    for c in &e.columns_absent {
        check(&mut results, &format!("absent:{c}"), curated.column_index(c).is_none(), String::new());
    }
    for c in &e.columns_present {
        check(&mut results, &format!("present:{c}"), curated.column_index(c).is_some(), String::new());
    }
    if let Some(m) = e.max_missing {
        check(&mut results, "max_missing", curated.total_missing() <= m, format!("{} missing", curated.total_missing()));
    }
    if let Some(m) = e.min_rows {
        check(&mut results, "min_rows", curated.row_count() >= m, format!("{} rows", curated.row_count()));
    }
    for g in &e.fixed {
        let r = recovery.issue_resolution.iter().find(|r| &r.generator == g);
        check(&mut results, &format!("fixed:{g}"), r.is_some_and(|r| r.fixed), r.map(|r| r.detail.clone()).unwrap_or_default());
    }
    for g in &e.detected {
        check(&mut results, &format!("detected:{g}"), seen.get(g).copied().unwrap_or(false), String::new());
    }
    if let Some(min) = e.flip_recall {
        let planted: Vec<String> = corrupted
            .key
            .entries
            .iter()
            .filter_map(|k| match &k.truth {
                Truth::Flips { ids } => Some(ids.clone()),
                _ => None,
            })
            .flatten()
            .collect();
        let flagged = flagged_ids(session.bank(), &id_col, "flag_noisy_labels");
        let hit = planted.iter().filter(|id| flagged.contains(*id)).count();
        let recall = if planted.is_empty() { 0.0 } else { hit as f64 / planted.len() as f64 };
        check(&mut results, "flip_recall", recall >= min, format!("{hit} of {} planted flips flagged", planted.len()));
    }
    for col in &e.removed_after_approval {
        let (ok, detail) = removed_after_approval(session.bank().events(), col);
        check(&mut results, &format!("approved_removal:{col}"), ok, detail);
    }

    Ok(ScenarioReport { name: sc.name.clone(), session: report, recovery, expectations: results, events: session.bank().events().to_vec() })
}

/// The first successful `drop_columns` naming `column` comes after a
/// feedback event confirming it.
fn removed_after_approval(events: &[EventRecord], column: &str) -> (bool, String) {
    use crate::state::EventKind;
    let names = |v: &serde_json::Value| v.as_array().into_iter().flatten().any(|c| c == column);
    let approved = events.iter().position(|e| e.kind == EventKind::FeedbackReceived && names(&e.payload["answer"]["value"]));
    let dropped = events.iter().position(|e| {
        e.kind == EventKind::ToolInvoked && e.payload["tool"] == "drop_columns" && e.payload["report"]["status"] == "ok" && names(&e.payload["params"]["columns"])
    });
    match (approved, dropped) {
        (Some(a), Some(d)) => (a < d, format!("approved at event {a}, dropped at event {d}")),
        (None, Some(d)) => (false, format!("dropped at event {d} without approval")),
        (_, None) => (false, "never dropped".into()),
    }
}
