//! Where answers to expert questions come from in headless runs.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::feedback::{Answer, AnswerError, ExpertQuestion, QuestionOptions};
use crate::llm::normalize_terminology;

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertReply {
    Answer(Answer),
    /// No answer yet; the session waits for one to be posted.
    Wait,
    Unanswerable,
}

pub trait ExpertSource {
    fn reply(&mut self, question: &ExpertQuestion) -> ExpertReply;
}

/// Leaves every question open for an interactive answer.
#[derive(Debug, Default)]
pub struct InteractiveExpert;

impl ExpertSource for InteractiveExpert {
    fn reply(&mut self, _: &ExpertQuestion) -> ExpertReply {
        ExpertReply::Wait
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptAnswer {
    /// `"approve"` accepts the proposal; `"decline"` rejects it.
    Verdict(String),
    Explicit(Answer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// Regex tried against the question text and its normalized form.
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub answer: ScriptAnswer,
    #[serde(default = "one")]
    pub times: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script: {0}")]
    Parse(String),
    #[error("rule {rule}: bad pattern: {source}")]
    Pattern { rule: usize, source: regex::Error },
    #[error("rule {rule} answer for '{key}': {source}")]
    Answer { rule: usize, key: String, source: AnswerError },
}

impl ExpertScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Turns a verdict into a structured answer for `q`.
pub fn verdict_answer(q: &ExpertQuestion, verdict: &str) -> Answer {
    match verdict.trim().to_lowercase().as_str() {
        "approve" | "yes" | "confirm" => q.default_approval(),
        _ => match &q.options {
            QuestionOptions::Columns { .. } => Answer::Columns(Vec::new()),
            QuestionOptions::Choice { options } if options.iter().any(|o| o == "keep") => Answer::Choice("keep".into()),
            _ => Answer::Text(verdict.to_string()),
        },
    }
}

/// Answers from an ordered rule list; each rule is used at most `times` times.
pub struct ScriptedExpert {
    rules: Vec<(ScriptRule, Option<Regex>, u32)>,
    /// Validation failures, newest last.
    pub errors: Vec<String>,
}

impl ScriptedExpert {
    pub fn new(script: ExpertScript) -> Result<Self, ScriptError> {
        let rules = script
            .rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let re = r
                    .pattern
                    .as_deref()
                    .map(|p| Regex::new(&format!("(?i){p}")).map_err(|source| ScriptError::Pattern { rule: i, source }))
                    .transpose()?;
                Ok((r, re, 0))
            })
            .collect::<Result<_, ScriptError>>()?;
        Ok(Self { rules, errors: Vec::new() })
    }

    pub fn empty() -> Self {
        Self { rules: Vec::new(), errors: Vec::new() }
    }

    fn matches(rule: &ScriptRule, re: &Option<Regex>, q: &ExpertQuestion) -> bool {
        if rule.key.is_none() && re.is_none() {
            return true;
        }
        let key_ok = rule.key.as_ref().is_none_or(|k| k == &q.key || q.key.starts_with(&format!("{k}:")));
        let text_ok = re.as_ref().is_none_or(|re| re.is_match(&q.text) || re.is_match(&normalize_terminology(&q.text)));
        key_ok && text_ok
    }

    /// First matching unused rule's answer, validated against the question.
    pub fn answer(&mut self, q: &ExpertQuestion) -> Result<Option<Answer>, ScriptError> {
        for (i, (rule, re, used)) in self.rules.iter_mut().enumerate() {
            if *used >= rule.times || !Self::matches(rule, re, q) {
                continue;
            }
            *used += 1;
            let answer = match &rule.answer {
                ScriptAnswer::Verdict(v) => verdict_answer(q, v),
                ScriptAnswer::Explicit(a) => a.clone(),
            };
            q.validate_answer(&answer).map_err(|source| ScriptError::Answer { rule: i, key: q.key.clone(), source })?;
            return Ok(Some(answer));
        }
        Ok(None)
    }
}

impl ExpertSource for ScriptedExpert {
    fn reply(&mut self, q: &ExpertQuestion) -> ExpertReply {
        match self.answer(q) {
            Ok(Some(a)) => ExpertReply::Answer(a),
            Ok(None) => ExpertReply::Unanswerable,
            Err(e) => {
                self.errors.push(e.to_string());
                ExpertReply::Unanswerable
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leak_q() -> ExpertQuestion {
        ExpertQuestion {
            id: "q1".into(),
            key: "label_leakage".into(),
            text: "These columns may leak information about the outcome: a, b. Do you agree?".into(),
            options: QuestionOptions::Columns { proposed: vec!["a".into(), "b".into()] },
            blocking: true,
        }
    }

    #[test]
    fn regex_rule_confirms_columns() {
        let script = ExpertScript::from_json(r#"{"rules":[{"match":"leak","answer":"approve"}]}"#).unwrap();
        let mut e = ScriptedExpert::new(script).unwrap();
        assert_eq!(e.answer(&leak_q()).unwrap(), Some(Answer::Columns(vec!["a".into(), "b".into()])));
    }

    #[test]
    fn exhausted_rule_not_reused() {
        let script = ExpertScript::from_json(r#"{"rules":[{"key":"label_leakage","answer":"approve"}]}"#).unwrap();
        let mut e = ScriptedExpert::new(script).unwrap();
        assert!(e.answer(&leak_q()).unwrap().is_some());
        assert_eq!(e.answer(&leak_q()).unwrap(), None);
    }

    #[test]
    fn invalid_option_rejected() {
        let script =
            ExpertScript::from_json(r#"{"rules":[{"key":"label_leakage","answer":{"type":"columns","value":["zzz"]}}]}"#).unwrap();
        let mut e = ScriptedExpert::new(script).unwrap();
        assert!(matches!(e.answer(&leak_q()), Err(ScriptError::Answer { .. })));
    }

    #[test]
    fn normalized_text_matches() {
        let script = ExpertScript::from_json(r#"{"rules":[{"match":"about the target","answer":"decline"}]}"#).unwrap();
        let mut e = ScriptedExpert::new(script).unwrap();
        assert_eq!(e.answer(&leak_q()).unwrap(), Some(Answer::Columns(vec![])));
    }
}
