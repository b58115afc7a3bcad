//! Provider-agnostic structured completion for coordinator decisions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::sync::OnceLock;

use crate::coordinator::{rules, CoordinatorView, DecisionDocument};

pub const DECISION_SCHEMA: &str = "decision/v1";
const DIGEST_LIMIT: usize = 6000;

/// ML term first, then the biostatistics phrasings that map onto it.
const GLOSSARY: &[(&str, &[&str])] = &[
    ("model", &["statistical model", "predictive model"]),
    ("features", &["covariates", "covariables", "predictor variables", "explanatory variables", "independent variables"]),
    ("feature", &["covariate", "covariable", "predictor variable", "explanatory variable", "independent variable"]),
    ("targets", &["outcomes", "endpoints"]),
    ("target", &["outcome", "endpoint", "dependent variable", "response variable"]),
    ("training", &["model fitting", "model estimation"]),
    ("test set", &["validation data"]),
    ("overfitting", &["overparameterization", "overparametrization"]),
    ("hyperparameters", &["tuning parameters"]),
    ("performance metrics", &["goodness-of-fit measures", "goodness of fit measures"]),
    ("cross-validation", &["internal validation"]),
    ("bias-variance tradeoff", &["model complexity"]),
    ("generalization", &["external validity"]),
    ("feature selection", &["variable selection"]),
];

fn glossary_regex() -> &'static Vec<(Regex, &'static str)> {
    static RE: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    RE.get_or_init(|| {
        let mut pairs: Vec<(&str, &str)> =
            GLOSSARY.iter().flat_map(|(ml, others)| others.iter().map(move |o| (*o, *ml))).collect();
        // longer phrases first so "predictor variables" wins over shorter overlaps
        pairs.sort_by_key(|(o, _)| std::cmp::Reverse(o.len()));
        pairs
            .into_iter()
            .map(|(o, ml)| (Regex::new(&format!(r"(?i)\b{}\b", regex::escape(o))).expect("glossary pattern"), ml))
            .collect()
    })
}

/// Maps biostatistics phrasing onto ML terms. Leading capitals are kept.
pub fn normalize_terminology(text: &str) -> String {
    let mut out = text.to_string();
    for (re, ml) in glossary_regex() {
        out = re
            .replace_all(&out, |c: &regex::Captures<'_>| {
                let m = &c[0];
                if m.chars().next().is_some_and(char::is_uppercase) {
                    let mut s = ml.to_string();
                    s[..1].make_ascii_uppercase();
                    s
                } else {
                    ml.to_string()
                }
            })
            .into_owned();
    }
    out
}

fn glossary_text() -> String {
    GLOSSARY
        .iter()
        .map(|(ml, others)| format!("- {}: {}", ml, others.join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

fn preamble() -> String {
    format!(
        "You are the coordinator of a data curation session for a tabular prediction task.\n\
         Each turn: list the issues you observe (keys from the observation), decide whether to \
         backtrack to an earlier state (only when the current state is degraded and an earlier \
         episode caused it), and edit the next few plan episodes. Ask the expert when a decision \
         needs domain knowledge; row or column removals need approval.\n\
         Work in phase order: understanding, formatting, missingness, leakage, quality, modeling, interpretation.\n\
         Terminology used in this session (left) and equivalent phrasings (right):\n{}\n\
         Reply with one JSON object matching schema {DECISION_SCHEMA}: \
         {{\"issues\": [string], \"backtrack\": {{\"flag\": bool, \"target\": int?, \"reason\": string}}, \
         \"plan_edits\": [{{\"kind\": \"add\"|\"remove\"|\"modify\"|\"reorder\", ...}}], \
         \"questions\": [{{\"key\": string, \"text\": string, \"options\": {{\"type\": \"columns\"|\"choice\"|\"free_text\", ...}}}}]}}",
        glossary_text()
    )
}

fn truncate(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        return s.to_string();
    }
    let mut end = limit;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}\n[truncated {} bytes]", &s[..end], s.len() - end)
}

fn digest_text(view: &CoordinatorView) -> String {
    let obs = &view.observation;
    let mut lines = vec![
        format!("step {} | {} rows x {} columns | {} missing cells", view.step, obs.digest.rows, obs.digest.columns, obs.digest.missing_cells),
        format!("task: {:?} on '{}'", view.task.task_kind, view.task.target_col),
        format!("verdict: {:?}", obs.verdict),
    ];
    for d in &obs.degradations {
        lines.push(format!("degraded: {} (cause {:?}, restore to {:?})", d.reason, d.cause, d.restore_to));
    }
    for i in &obs.issues {
        lines.push(format!("issue [{}] {}", i.key, i.summary));
    }
    for e in view.plan.pending() {
        lines.push(format!("pending {} {} {}", e.id, e.tool, serde_json::to_string(&e.params).unwrap_or_default()));
    }
    for m in view.history.iter().rev().take(8).rev() {
        lines.push(format!("done {} {} ok={} rows {}→{}", m.episode_id, m.tool, m.succeeded, m.rows_before, m.rows_after));
    }
    for f in &obs.recent_feedback {
        lines.push(format!("feedback [{}] {:?}", f.question_key, f.answer));
    }
    for t in view.tools.iter().filter(|t| t.supported) {
        lines.push(format!("tool {} ({})", t.name, t.category.as_str()));
    }
    truncate(&lines.join("\n"), DIGEST_LIMIT)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub schema_id: String,
    pub preamble: String,
    pub digest: String,
    pub view: CoordinatorView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reprompt: Option<String>,
}

impl PromptBundle {
    pub fn new(view: &CoordinatorView) -> Self {
        Self {
            schema_id: DECISION_SCHEMA.to_string(),
            preamble: preamble(),
            digest: digest_text(view),
            view: view.clone(),
            reprompt: None,
        }
    }

    /// Hash of the semantic content. A reprompt shares the key of its
    /// original prompt; fixtures list responses in order per key.
    pub fn key(&self) -> String {
        let mut b = self.clone();
        b.reprompt = None;
        let bytes = serde_json::to_vec(&b).expect("bundle serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Text sent to a chat model as the user message.
    pub fn user_message(&self) -> String {
        let mut s = format!("{}\n\nfull state:\n{}", self.digest, serde_json::to_string(&self.view).unwrap_or_default());
        if let Some(r) = &self.reprompt {
            s.push_str(&format!("\n\nYour previous reply was rejected: {r}\nReply again with a corrected JSON object."));
        }
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("unmatched prompt {0}")]
    Unmatched(String),
    #[error("decision rejected twice: {0}")]
    SchemaViolation(String),
    #[error("provider not configured: {0}")]
    NotConfigured(String),
    #[error("fixture: {0}")]
    Fixture(String),
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError>;
}

/// Answers with the rule policy's decision for the embedded view.
#[derive(Debug, Default)]
pub struct MockProvider;

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let doc = rules::decide(&bundle.view);
        Ok(serde_json::to_string_pretty(&doc).expect("decision serializes"))
    }
}

pub type Fixture = BTreeMap<String, Vec<String>>;

pub fn load_fixture(path: &Path) -> Result<Fixture, LlmError> {
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LlmError::Fixture(e.to_string()))
}

/// Replays recorded responses. Each prompt key has its own cursor.
pub struct ReplayProvider {
    fixture: Fixture,
    cursors: Mutex<BTreeMap<String, usize>>,
}

impl ReplayProvider {
    pub fn new(fixture: Fixture) -> Self {
        Self { fixture, cursors: Mutex::new(BTreeMap::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(load_fixture(path)?))
    }
}

impl LlmProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let key = bundle.key();
        let responses = self.fixture.get(&key).ok_or_else(|| LlmError::Unmatched(key.clone()))?;
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let i = cursors.entry(key.clone()).or_default();
        let r = responses.get(*i).ok_or_else(|| LlmError::Unmatched(key.clone()))?;
        *i += 1;
        Ok(r.clone())
    }
}

/// Wraps another provider and keeps every (key, response) pair.
pub struct RecordingProvider {
    inner: Box<dyn LlmProvider>,
    recorded: Mutex<Fixture>,
}

impl RecordingProvider {
    pub fn new(inner: Box<dyn LlmProvider>) -> Self {
        Self { inner, recorded: Mutex::new(Fixture::new()) }
    }

    pub fn fixture(&self) -> Fixture {
        self.recorded.lock().expect("record lock").clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        let text = serde_json::to_string_pretty(&self.fixture()).expect("fixture serializes");
        std::fs::write(path, text).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))
    }
}

impl LlmProvider for RecordingProvider {
    fn name(&self) -> &str {
        "recording"
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let r = self.inner.complete(bundle)?;
        self.recorded.lock().expect("record lock").entry(bundle.key()).or_default().push(r.clone());
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_http_timeout")]
    pub timeout_secs: u64,
    /// Minimum spacing between requests across all sessions sharing the provider.
    #[serde(default)]
    pub min_interval_ms: u64,
}

fn default_key_env() -> String {
    "CURATE_LLM_API_KEY".into()
}

fn default_http_timeout() -> u64 {
    120
}

/// Chat-completions adapter for a live model.
pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
    last: Mutex<Option<Instant>>,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .new_agent();
        Self { config, agent, last: Mutex::new(None) }
    }
}

impl LlmProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| LlmError::NotConfigured(format!("environment variable {} is not set", self.config.api_key_env)))?;
        {
            let mut last = self.last.lock().expect("rate lock");
            if let Some(t) = *last {
                let gap = Duration::from_millis(self.config.min_interval_ms);
                if t.elapsed() < gap {
                    std::thread::sleep(gap - t.elapsed());
                }
            }
            *last = Some(Instant::now());
        }
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": bundle.preamble},
                {"role": "user", "content": bundle.user_message()},
            ],
        });
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| LlmError::Transport(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response has no message content".into()))
    }
}

/// Pulls the JSON object out of a reply, tolerating code fences and prose.
pub fn parse_decision(raw: &str) -> Result<DecisionDocument, String> {
    let start = raw.find('{').ok_or("reply contains no JSON object")?;
    let end = raw.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    serde_json::from_str(&raw[start..=end]).map_err(|e| format!("reply does not match {DECISION_SCHEMA}: {e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub document: DecisionDocument,
    pub raw: String,
    /// Why the first reply was rejected, when a reprompt was needed.
    pub rejected: Option<String>,
}

/// One completion with at most one reprompt carrying the validation error.
pub fn complete(
    bundle: &PromptBundle,
    provider: &dyn LlmProvider,
    validate: &dyn Fn(&DecisionDocument) -> Result<(), String>,
) -> Result<Completion, LlmError> {
    let check = |raw: &str| parse_decision(raw).and_then(|d| validate(&d).map(|_| d));
    let raw = provider.complete(bundle)?;
    let err = match check(&raw) {
        Ok(document) => return Ok(Completion { document, raw, rejected: None }),
        Err(e) => e,
    };
    let mut again = bundle.clone();
    again.reprompt = Some(err.clone());
    let raw = provider.complete(&again)?;
    match check(&raw) {
        Ok(document) => Ok(Completion { document, raw, rejected: Some(err) }),
        Err(e) => Err(LlmError::SchemaViolation(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glossary_examples() {
        assert_eq!(normalize_terminology("variable selection"), "feature selection");
        assert_eq!(normalize_terminology("covariables"), "features");
        assert_eq!(normalize_terminology("Covariates and outcomes"), "Features and targets");
        assert_eq!(normalize_terminology("nothing to see"), "nothing to see");
    }

    #[test]
    fn word_boundaries() {
        assert_eq!(normalize_terminology("outcomeX stays"), "outcomeX stays");
    }

    #[test]
    fn fenced_json_parses() {
        let raw = "```json\n{\"backtrack\": {\"flag\": false}}\n```";
        let d = parse_decision(raw).unwrap();
        assert!(!d.backtrack.flag);
        assert!(parse_decision("no json here").is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalization_is_idempotent(words in proptest::collection::vec(
            proptest::sample::select(vec![
                "covariates", "Outcome", "model fitting", "variable selection", "the", "Validation Data",
                "internal validation", "endpoint", "features", "tuning parameters", "x", "Predictor variables",
            ]),
            0..12,
        )) {
            let text = words.join(" ");
            let once = normalize_terminology(&text);
            proptest::prop_assert_eq!(normalize_terminology(&once), once);
        }
    }
}
