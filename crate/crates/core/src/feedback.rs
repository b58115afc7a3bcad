//! Expert questions and the feedback that answers them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QuestionOptions {
    /// Confirm or amend a proposed column list.
    Columns { proposed: Vec<String> },
    /// Pick one of the offered options.
    Choice { options: Vec<String> },
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertQuestion {
    /// Assigned by the session when the question is asked.
    #[serde(default)]
    pub id: String,
    /// Semantic key; at most one open question per key.
    pub key: String,
    pub text: String,
    pub options: QuestionOptions,
    #[serde(default = "default_true")]
    pub blocking: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Text(String),
    Columns(Vec<String>),
    Choice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    Expert,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub question_id: String,
    pub question_key: String,
    pub question: String,
    pub answer: Answer,
    pub author: Author,
    pub step: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AnswerError {
    #[error("answer type does not match the question")]
    WrongType,
    #[error("'{0}' is not among the offered options")]
    NotOffered(String),
}

impl ExpertQuestion {
    /// Structured answers may only reference what the question offered.
    pub fn validate_answer(&self, answer: &Answer) -> Result<(), AnswerError> {
        match (&self.options, answer) {
            (QuestionOptions::Columns { proposed }, Answer::Columns(cols)) => {
                for c in cols {
                    if !proposed.contains(c) {
                        return Err(AnswerError::NotOffered(c.clone()));
                    }
                }
                Ok(())
            }
            (QuestionOptions::Choice { options }, Answer::Choice(c)) => {
                if options.contains(c) {
                    Ok(())
                } else {
                    Err(AnswerError::NotOffered(c.clone()))
                }
            }
            (QuestionOptions::FreeText, Answer::Text(_)) => Ok(()),
            // Free-text replies are accepted anywhere; the planner treats them as a decline.
            (_, Answer::Text(_)) => Ok(()),
            _ => Err(AnswerError::WrongType),
        }
    }

    /// The answer that accepts the proposal as offered.
    pub fn default_approval(&self) -> Answer {
        match &self.options {
            QuestionOptions::Columns { proposed } => Answer::Columns(proposed.clone()),
            QuestionOptions::Choice { options } => Answer::Choice(options.first().cloned().unwrap_or_default()),
            QuestionOptions::FreeText => Answer::Text("approve".into()),
        }
    }
}
