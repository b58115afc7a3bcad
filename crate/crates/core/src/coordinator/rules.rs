//! Deterministic rule policy: a pure function of the coordinator view.

use std::collections::BTreeMap;

use serde_json::json;

use super::observe::{answered, text_key, AGGREGATION_KEY};
use super::{
    assess_backtrack, params_equal, CoordinatorView, DecisionDocument, Finding, Issue, Verdict,
};
use crate::feedback::{Answer, ExpertQuestion, QuestionOptions};
use crate::plan::{NewEpisode, PlanEdit, PlanEditOp};
use crate::registry::Params;

enum Action {
    Run { tool: &'static str, params: Params, goal: String },
    Ask(ExpertQuestion),
    Nothing,
}

fn params(pairs: &[(&str, serde_json::Value)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn question(key: &str, text: String, options: QuestionOptions) -> ExpertQuestion {
    ExpertQuestion { id: String::new(), key: key.to_string(), text, options, blocking: true }
}

fn preview(rows: &[usize]) -> String {
    let shown: Vec<String> = rows.iter().take(20).map(|r| r.to_string()).collect();
    if rows.len() > 20 {
        format!("{} … ({} total)", shown.join(", "), rows.len())
    } else {
        shown.join(", ")
    }
}

/// Parses `name=regex` pairs separated by `;` or newlines. Anything without
/// an `=` (for example "skip") contributes nothing.
pub fn parse_patterns(text: &str) -> BTreeMap<String, String> {
    text.split([';', '\n'])
        .filter_map(|part| {
            let (name, re) = part.split_once('=')?;
            let (name, re) = (name.trim(), re.trim());
            (!name.is_empty() && !re.is_empty()).then(|| (name.to_string(), re.to_string()))
        })
        .collect()
}

const MISSINGNESS_CANDIDATES: &[(&str, &str)] = &[("drop_missing", ""), ("impute", "mean"), ("impute", "knn"), ("impute", "mode")];

fn action(view: &CoordinatorView, issue: &Issue) -> Action {
    let key = issue.key.as_str();
    let usable = |tool: &str| view.tool(tool).is_some_and(|t| t.supported);
    match &issue.finding {
        Finding::NoEda => Action::Run { tool: "eda_summary", params: Params::new(), goal: "profile the dataset".into() },
        Finding::MultipleFiles { files } => {
            Action::Run { tool: "merge_files", params: Params::new(), goal: format!("merge the {files} source files") }
        }
        Finding::MultipleMeasurements { id_col, time_col, rows, ids } => match answered(&view.questions, AGGREGATION_KEY).last() {
            Some((_, Answer::Choice(policy))) => {
                let mut p = params(&[("id_col", json!(id_col)), ("policy", json!(policy))]);
                if policy == "last" {
                    if let Some(t) = time_col {
                        p.insert("time_col".into(), json!(t));
                    }
                }
                Action::Run { tool: "aggregate_records", params: p, goal: format!("one row per '{id_col}' ({policy})") }
            }
            Some(_) => Action::Nothing,
            None => Action::Ask(question(
                key,
                format!(
                    "There are {rows} rows but only {ids} distinct '{id_col}' values, so entities have repeated measurements. \
                     How should they be combined per '{id_col}': keep the last follow-up point, average them, or keep the first?"
                ),
                QuestionOptions::Choice { options: vec!["last".into(), "mean".into(), "first".into()] },
            )),
        },
        Finding::CaseVariants { column, mapping } => Action::Run {
            tool: "harmonize_values",
            params: params(&[("column", json!(column)), ("mapping", json!(mapping))]),
            goal: format!("unify spelling variants in '{column}'"),
        },
        Finding::FreeText { column } => match answered(&view.questions, &text_key(column)).last() {
            Some((_, Answer::Text(t))) => {
                let patterns = parse_patterns(t);
                if patterns.is_empty() {
                    Action::Nothing
                } else {
                    Action::Run {
                        tool: "extract_text_features",
                        params: params(&[("column", json!(column)), ("patterns", json!(patterns))]),
                        goal: format!("extract indicator features from '{column}'"),
                    }
                }
            }
            Some(_) => Action::Nothing,
            None => Action::Ask(question(
                key,
                format!(
                    "Column '{column}' holds free text. Which facts should become features? \
                     Reply with name=regex pairs separated by ';', or 'skip'."
                ),
                QuestionOptions::FreeText,
            )),
        },
        Finding::Missing { .. } => {
            for (tool, strategy) in MISSINGNESS_CANDIDATES {
                let p = if strategy.is_empty() { Params::new() } else { params(&[("strategy", json!(strategy))]) };
                if usable(tool) && !view.is_banned(tool, &p) {
                    let how = if strategy.is_empty() { tool.to_string() } else { format!("{strategy} imputation") };
                    return Action::Run { tool, params: p, goal: format!("handle missing values by {how}") };
                }
            }
            Action::Nothing
        }
        Finding::Leakage { unasked, confirmed, probe_gap } => {
            if !confirmed.is_empty() {
                Action::Run {
                    tool: "drop_columns",
                    params: params(&[("columns", json!(confirmed)), ("reason", json!("label leakage confirmed by expert"))]),
                    goal: format!("remove leaking columns {}", confirmed.join(", ")),
                }
            } else {
                let gap = probe_gap.map(|g| format!(" Including them changes the cross-validated metric by {g:.3}.")).unwrap_or_default();
                Action::Ask(question(
                    key,
                    format!(
                        "These columns may leak information about the outcome: {}.{gap} Do you agree with the identified columns? \
                         Confirm the ones to remove.",
                        unasked.join(", ")
                    ),
                    QuestionOptions::Columns { proposed: unasked.clone() },
                ))
            }
        }
        Finding::Redundancy { unasked, confirmed } => {
            if !confirmed.is_empty() {
                Action::Run {
                    tool: "drop_columns",
                    params: params(&[("columns", json!(confirmed)), ("reason", json!("redundant features confirmed by expert"))]),
                    goal: format!("remove redundant columns {}", confirmed.join(", ")),
                }
            } else {
                Action::Ask(question(
                    key,
                    format!(
                        "These columns nearly duplicate other features: {}. Confirm the ones to remove.",
                        unasked.join(", ")
                    ),
                    QuestionOptions::Columns { proposed: unasked.clone() },
                ))
            }
        }
        Finding::Outliers { rows, columns, approved } => {
            if *approved {
                Action::Run {
                    tool: "drop_rows",
                    params: params(&[("rows", json!(rows)), ("reason", json!("outliers approved for removal"))]),
                    goal: format!("remove {} outlier rows", rows.len()),
                }
            } else {
                Action::Ask(question(
                    key,
                    format!("Rows {} have extreme values in {}. Remove them?", preview(rows), columns.join(", ")),
                    QuestionOptions::Choice { options: vec!["remove".into(), "keep".into()] },
                ))
            }
        }
        Finding::NoisyLabels { rows, approved } => {
            if *approved {
                Action::Run {
                    tool: "drop_rows",
                    params: params(&[("rows", json!(rows)), ("reason", json!("likely label errors approved for removal"))]),
                    goal: format!("remove {} rows with likely label errors", rows.len()),
                }
            } else {
                Action::Ask(question(
                    key,
                    format!(
                        "Rows {} have labels that a cross-validated model confidently contradicts. Remove them?",
                        preview(rows)
                    ),
                    QuestionOptions::Choice { options: vec!["remove".into(), "keep".into()] },
                ))
            }
        }
        Finding::ShiftUnchecked => {
            Action::Run { tool: "detect_shift", params: Params::new(), goal: "compare training and test distributions".into() }
        }
        Finding::Imbalance { minority, .. } => Action::Run {
            tool: "smote_balance",
            params: Params::new(),
            goal: format!("oversample minority class '{minority}'"),
        },
        Finding::NoModel => Action::Run { tool: "train_evaluate", params: Params::new(), goal: "train and evaluate the model".into() },
        Finding::NoInterpretation => {
            Action::Run { tool: "permutation_importance", params: Params::new(), goal: "explain the model".into() }
        }
    }
}

fn question_open(view: &CoordinatorView, key: &str) -> bool {
    view.questions.iter().any(|q| q.question.key == key && q.answer.is_none())
}

/// Observation → backtrack assessment → lookahead over the next M episodes.
pub fn decide(view: &CoordinatorView) -> DecisionDocument {
    let obs = &view.observation;
    let mut doc = DecisionDocument {
        issues: obs.issues.iter().map(|i| i.key.clone()).collect(),
        backtrack: assess_backtrack(obs),
        plan_edits: Vec::new(),
        questions: Vec::new(),
    };
    if obs.verdict == Verdict::Blocked || doc.backtrack.flag {
        return doc;
    }
    for d in obs.degradations.iter().filter(|d| d.cause.is_none() && !d.failed) {
        let key = format!("degraded:{}", d.key);
        if !question_open(view, &key) {
            doc.questions.push(question(
                &key,
                format!("{}. No single episode explains this. Reply 'continue' to proceed anyway.", d.reason),
                QuestionOptions::FreeText,
            ));
            return doc;
        }
    }

    let m = view.config.lookahead.max(1);
    let window: Vec<_> = view.plan.pending().take(m).collect();
    let mut kept = Vec::new();
    for e in &window {
        let resolved = e.addresses.as_ref().is_some_and(|a| !obs.issues.iter().any(|i| &i.key == a));
        if view.is_banned(&e.tool, &e.params) {
            doc.plan_edits.push(PlanEdit::new(PlanEditOp::Remove { episode: e.id.clone() }, format!("{} with these parameters caused a backtrack", e.tool)));
        } else if resolved {
            doc.plan_edits.push(PlanEdit::new(PlanEditOp::Remove { episode: e.id.clone() }, "the issue it addressed is resolved"));
        } else {
            kept.push(*e);
        }
    }

    let mut slots = m.saturating_sub(kept.len());
    for issue in &obs.issues {
        match action(view, issue) {
            Action::Ask(q) => {
                if !question_open(view, &q.key) {
                    doc.questions.push(q);
                }
                break;
            }
            Action::Run { tool, params, goal } => {
                if view.is_banned(tool, &params) {
                    continue;
                }
                if let Some(e) = kept.iter().find(|e| e.addresses.as_deref() == Some(issue.key.as_str())) {
                    if e.tool == tool && !params_equal(&view.resolved(tool, &e.params), &view.resolved(tool, &params)) {
                        doc.plan_edits.push(PlanEdit::new(
                            PlanEditOp::Modify { episode: e.id.clone(), params },
                            format!("update parameters for {}", issue.key),
                        ));
                    }
                    continue;
                }
                let beyond = view.plan.pending().skip(m).any(|e| e.addresses.as_deref() == Some(issue.key.as_str()));
                if beyond || slots == 0 {
                    continue;
                }
                slots -= 1;
                doc.plan_edits.push(PlanEdit::new(
                    PlanEditOp::Add {
                        episode: NewEpisode { goal, tool: tool.to_string(), params, addresses: Some(issue.key.clone()) },
                        before: None,
                    },
                    issue.summary.clone(),
                ));
            }
            Action::Nothing => {}
        }
    }
    doc
}
