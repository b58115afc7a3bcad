use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::{
    CoordinatorConfig, DatasetDigest, Degradation, Detectors, Evidence, Finding, Issue, Observation, Phase,
    QuestionRecord, ToolSummary, Verdict,
};
use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::feedback::{Answer, FeedbackItem, QuestionOptions};
use crate::plan::{EpisodeMeta, EpisodeStatus, Plan};
use crate::registry::{Params, ToolCategory};
use crate::task::{TaskKind, TaskSpec};
use crate::tools::harmonize::canonical_case_mapping;

pub struct ObserveInput<'a> {
    pub step: u64,
    pub dataset: &'a TabularDataset,
    pub task: &'a TaskSpec,
    pub config: &'a CoordinatorConfig,
    /// Episode metadata of the active branch, oldest first.
    pub history: &'a [EpisodeMeta],
    pub plan: &'a Plan,
    pub questions: &'a [QuestionRecord],
    pub feedback: &'a [FeedbackItem],
    pub aux_files: usize,
    pub has_test: bool,
    pub tools: &'a [ToolSummary],
}

pub(crate) const AGGREGATION_KEY: &str = "aggregation_policy";
pub(crate) const LEAKAGE_KEY: &str = "label_leakage";
pub(crate) const REDUNDANCY_KEY: &str = "redundancy";
pub(crate) const OUTLIER_KEY: &str = "outliers";
pub(crate) const NOISY_KEY: &str = "noisy_labels";

pub(crate) fn text_key(column: &str) -> String {
    format!("text_patterns:{column}")
}

pub(crate) fn answered<'q>(questions: &'q [QuestionRecord], key: &'q str) -> impl Iterator<Item = (&'q QuestionRecord, &'q Answer)> {
    questions.iter().filter(move |q| q.question.key == key).filter_map(|q| q.answer.as_ref().map(|a| (q, a)))
}

fn is_open(questions: &[QuestionRecord], key: &str) -> bool {
    questions.iter().any(|q| q.question.key == key && q.answer.is_none())
}

/// Columns already proposed under `key`, and those the expert confirmed.
fn column_verdicts(questions: &[QuestionRecord], key: &str) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut proposed = BTreeSet::new();
    let mut confirmed = BTreeSet::new();
    for q in questions.iter().filter(|q| q.question.key == key) {
        if let QuestionOptions::Columns { proposed: p } = &q.question.options {
            proposed.extend(p.iter().cloned());
        }
        if let Some(Answer::Columns(c)) = &q.answer {
            confirmed.extend(c.iter().cloned());
        }
    }
    (proposed, confirmed)
}

/// Whether a row-removal question under `key` was answered, and how.
fn row_verdict(questions: &[QuestionRecord], key: &str) -> Option<bool> {
    answered(questions, key).last().map(|(_, a)| matches!(a, Answer::Choice(c) if c == "remove"))
}

fn done_addressing(plan: &Plan, key: &str) -> bool {
    plan.episodes.iter().any(|e| e.status == EpisodeStatus::Done && e.addresses.as_deref() == Some(key))
}

fn succeeded<'h>(history: &'h [EpisodeMeta], tool: &'h str) -> impl Iterator<Item = &'h EpisodeMeta> {
    history.iter().filter(move |m| m.succeeded && m.tool == tool)
}

fn available(tools: &[ToolSummary], name: &str) -> bool {
    tools.iter().any(|t| t.name == name && t.supported)
}

fn report_rows(data: &Value) -> Vec<usize> {
    data["rows"].as_array().map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect()).unwrap_or_default()
}

fn id_column(ds: &TabularDataset, task: &TaskSpec) -> Option<String> {
    if let Some(g) = &task.group_col {
        return ds.column_index(g).map(|_| g.clone());
    }
    ds.columns()
        .iter()
        .find(|c| {
            let n = c.name.to_lowercase();
            n == "id" || n.ends_with("_id") || c.kind == ColumnKind::Identifier
        })
        .map(|c| c.name.clone())
}

fn time_column(ds: &TabularDataset, task: &TaskSpec) -> Option<String> {
    let candidates: Vec<&str> = ds
        .columns()
        .iter()
        .filter(|c| c.kind != ColumnKind::Text && !task.is_task_column(&c.name))
        .map(|c| c.name.as_str())
        .collect();
    for stem in ["visit", "time", "date", "day", "month"] {
        if let Some(c) = candidates.iter().find(|c| c.to_lowercase().contains(stem)) {
            return Some(c.to_string());
        }
    }
    None
}

/// A text column holding sentences rather than labels.
fn is_free_text(ds: &TabularDataset, col: usize) -> bool {
    let texts: Vec<&str> = ds.column_cells(col).filter_map(Cell::as_str).collect();
    if texts.is_empty() {
        return false;
    }
    let words: usize = texts.iter().map(|t| t.split_whitespace().count()).sum();
    words as f64 / texts.len() as f64 >= 3.0
}

fn degradations(input: &ObserveInput<'_>) -> Vec<Degradation> {
    let ObserveInput { dataset, task, config, history, questions, .. } = input;
    let mut out = Vec::new();
    let cause_of = |pred: &dyn Fn(&EpisodeMeta) -> bool| history.iter().rev().find(|m| m.succeeded && pred(m));

    if dataset.row_count() < config.min_rows {
        let cause = cause_of(&|m| m.rows_before >= config.min_rows && m.rows_after < config.min_rows);
        out.push(Degradation {
            key: "insufficient_rows".into(),
            reason: format!("insufficient rows: {} < {}", dataset.row_count(), config.min_rows),
            cause: cause.map(|m| m.episode_id.clone()),
            restore_to: cause.map(|m| m.started_step),
            failed: false,
        });
    }
    for col in task.task_columns() {
        if dataset.column_index(col).is_none() {
            let cause = cause_of(&|m| m.columns_before.iter().any(|c| c == col) && !m.columns_after.iter().any(|c| c == col));
            out.push(Degradation {
                key: format!("task_column_deleted:{col}"),
                reason: format!("task column '{col}' was deleted"),
                cause: cause.map(|m| m.episode_id.clone()),
                restore_to: cause.map(|m| m.started_step),
                failed: false,
            });
        }
    }
    if let Some(last) = history.last().filter(|m| !m.succeeded) {
        out.push(Degradation {
            key: format!("episode_failed:{}", last.episode_id),
            reason: format!("episode {} ({}) failed after {} attempts", last.episode_id, last.tool, last.retry_count + 1),
            cause: Some(last.episode_id.clone()),
            restore_to: None,
            failed: true,
        });
    }
    let trained: Vec<(usize, &EpisodeMeta)> =
        history.iter().enumerate().filter(|(_, m)| m.succeeded && m.tool == "train_evaluate" && m.metric.is_some()).collect();
    if let [.., (i, prev), (j, last)] = trained.as_slice() {
        let (a, b) = (prev.metric.unwrap_or(0.0), last.metric.unwrap_or(0.0));
        if a - b > config.max_metric_drop {
            let cause = history[*i..*j].iter().rev().find(|m| m.succeeded && m.input_fingerprint != m.output_fingerprint);
            out.push(Degradation {
                key: "metric_drop".into(),
                reason: format!("metric dropped from {a:.4} to {b:.4}"),
                cause: cause.map(|m| m.episode_id.clone()),
                restore_to: cause.map(|m| m.started_step),
                failed: false,
            });
        }
    }
    out.retain(|d| answered(questions, &format!("degraded:{}", d.key)).next().is_none());
    out
}

/// State observation: dataset digest, degradations, and the issues of the
/// earliest phase that still has any. Detectors run only when the loop is
/// neither blocked nor about to backtrack.
pub fn observe(input: &ObserveInput<'_>, detectors: &mut dyn Detectors) -> Observation {
    let open_questions: Vec<_> =
        input.questions.iter().filter(|q| q.answer.is_none()).map(|q| q.question.clone()).collect();
    let degradations = degradations(input);
    let blocked = open_questions.iter().any(|q| q.blocking);
    let verdict = if blocked {
        Verdict::Blocked
    } else if degradations.is_empty() {
        Verdict::OnTrack
    } else {
        Verdict::Degraded
    };
    let fp = input.dataset.fingerprint();
    let model_current = succeeded(input.history, "train_evaluate").any(|m| m.input_fingerprint == fp);
    let restorable = degradations.iter().any(|d| d.restore_to.is_some());
    let issues = if blocked || restorable { Vec::new() } else { phase_issues(input, detectors, model_current) };
    Observation {
        step: input.step,
        digest: DatasetDigest::of(input.dataset),
        issues,
        open_questions,
        recent_feedback: input.feedback.iter().rev().take(5).rev().cloned().collect(),
        verdict,
        degradations,
        model_current,
    }
}

fn issue(key: impl Into<String>, category: ToolCategory, phase: Phase, evidence: Evidence, summary: String, finding: Finding) -> Issue {
    Issue { key: key.into(), category, phase, evidence, summary, finding }
}

fn phase_issues(input: &ObserveInput<'_>, det: &mut dyn Detectors, model_current: bool) -> Vec<Issue> {
    let ObserveInput { dataset: ds, task, config, history, plan, questions, tools, .. } = *input;
    let fp = ds.fingerprint();

    if succeeded(history, "eda_summary").next().is_none() {
        return vec![issue("eda", ToolCategory::Eda, Phase::Understanding, Evidence::rule("no_eda"), "dataset not yet profiled".into(), Finding::NoEda)];
    }
    let eda_evidence = succeeded(history, "eda_summary")
        .last()
        .and_then(|m| m.report_ref)
        .map(Evidence::event)
        .unwrap_or_else(|| Evidence::rule("digest"));

    // Formatting
    let mut out = Vec::new();
    if input.aux_files > 0 && succeeded(history, "merge_files").next().is_none() {
        out.push(issue(
            "multiple_files",
            ToolCategory::MultipleFiles,
            Phase::Formatting,
            Evidence::rule("aux_files"),
            format!("{} additional source files to merge", input.aux_files),
            Finding::MultipleFiles { files: input.aux_files + 1 },
        ));
    }
    if let Some(id_col) = id_column(ds, task) {
        let c = ds.column_index(&id_col).unwrap_or(0);
        let ids: BTreeSet<String> = ds.column_cells(c).filter(|v| !v.is_missing()).map(Cell::render).collect();
        let declined = answered(questions, AGGREGATION_KEY).last().is_some_and(|(_, a)| matches!(a, Answer::Text(_)));
        if ids.len() < ds.row_count() && !declined {
            out.push(issue(
                AGGREGATION_KEY,
                ToolCategory::MultipleMeasurements,
                Phase::Formatting,
                Evidence::rule("duplicate_ids"),
                format!("{} rows for {} distinct '{id_col}' values", ds.row_count(), ids.len()),
                Finding::MultipleMeasurements { time_col: time_column(ds, task), id_col, rows: ds.row_count(), ids: ids.len() },
            ));
        }
    }
    for (i, col) in ds.columns().iter().enumerate() {
        if !matches!(col.kind, ColumnKind::Categorical | ColumnKind::Text) {
            continue;
        }
        let mapping = canonical_case_mapping(ds, i);
        if !mapping.is_empty() {
            out.push(issue(
                format!("case_variants:{}", col.name),
                ToolCategory::InconsistentData,
                Phase::Formatting,
                Evidence::rule("case_variants"),
                format!("'{}' spells the same values with different case", col.name),
                Finding::CaseVariants { column: col.name.clone(), mapping },
            ));
        }
    }
    for (i, col) in ds.columns().iter().enumerate() {
        if col.kind != ColumnKind::Text || task.is_task_column(&col.name) || !is_free_text(ds, i) {
            continue;
        }
        let key = text_key(&col.name);
        let pending = match answered(questions, &key).last() {
            None => true,
            Some((_, Answer::Text(t))) => !crate::coordinator::rules::parse_patterns(t).is_empty() && !done_addressing(plan, &key),
            Some(_) => false,
        };
        if pending {
            out.push(issue(
                key,
                ToolCategory::DataExtraction,
                Phase::Formatting,
                Evidence::rule("free_text"),
                format!("'{}' holds free text", col.name),
                Finding::FreeText { column: col.name.clone() },
            ));
        }
    }
    if !out.is_empty() {
        return out;
    }

    // Missingness
    if ds.total_missing() > 0 {
        let columns: Vec<String> = ds.columns().iter().filter(|c| c.missing_count > 0).map(|c| c.name.clone()).collect();
        let rows = (0..ds.row_count()).filter(|&r| ds.row_has_missing(r)).count();
        return vec![issue(
            "missingness",
            ToolCategory::Missingness,
            Phase::Missingness,
            eda_evidence,
            format!("{} missing cells in {rows} rows across {}", ds.total_missing(), columns.join(", ")),
            Finding::Missing { cells: ds.total_missing(), rows, columns },
        )];
    }

    // Leakage and redundancy
    if available(tools, "detect_label_leakage") {
        if let Some((seq, rep)) = det.detect("detect_label_leakage", Params::new()) {
            let suspects: Vec<String> = rep.data["suspects"]
                .as_array()
                .map(|a| a.iter().filter_map(|s| s["column"].as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            let (proposed, confirmed) = column_verdicts(questions, LEAKAGE_KEY);
            let unasked: Vec<String> =
                suspects.iter().filter(|s| !proposed.contains(*s) && ds.column_index(s).is_some()).cloned().collect();
            let confirmed: Vec<String> = confirmed.into_iter().filter(|c| ds.column_index(c).is_some()).collect();
            let mut probe_gap = None;
            if !unasked.is_empty() && available(tools, "leakage_probe") {
                let mut p = Params::new();
                p.insert("suspects".into(), json!(unasked));
                probe_gap = det.detect("leakage_probe", p).and_then(|(_, r)| r.metrics.get("gap").copied());
            }
            if !unasked.is_empty() || !confirmed.is_empty() {
                out.push(issue(
                    LEAKAGE_KEY,
                    ToolCategory::LabelLeakage,
                    Phase::Leakage,
                    Evidence::event(seq),
                    format!("possible label leakage: {}", unasked.iter().chain(&confirmed).cloned().collect::<Vec<_>>().join(", ")),
                    Finding::Leakage { unasked, confirmed, probe_gap },
                ));
            }
        }
    }
    if available(tools, "prune_redundant") {
        let mut p = Params::new();
        p.insert("dry_run".into(), json!(true));
        if let Some((seq, rep)) = det.detect("prune_redundant", p) {
            let dropped: Vec<String> = rep.data["dropped"]
                .as_array()
                .map(|a| a.iter().filter_map(|s| s.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            let (proposed, confirmed) = column_verdicts(questions, REDUNDANCY_KEY);
            let unasked: Vec<String> = dropped.iter().filter(|s| !proposed.contains(*s)).cloned().collect();
            let confirmed: Vec<String> = confirmed.into_iter().filter(|c| ds.column_index(c).is_some()).collect();
            if !unasked.is_empty() || !confirmed.is_empty() {
                out.push(issue(
                    REDUNDANCY_KEY,
                    ToolCategory::FeatureRedundancy,
                    Phase::Leakage,
                    Evidence::event(seq),
                    format!("redundant features: {}", unasked.iter().chain(&confirmed).cloned().collect::<Vec<_>>().join(", ")),
                    Finding::Redundancy { unasked, confirmed },
                ));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }

    // Quality
    let row_question = |key: &str| -> Option<bool> {
        match row_verdict(questions, key) {
            Some(true) if done_addressing(plan, key) => None,
            Some(true) => Some(true),
            Some(false) => None,
            None if is_open(questions, key) => None,
            None => Some(false),
        }
    };
    if available(tools, "detect_outliers") {
        if let Some(approved) = row_question(OUTLIER_KEY) {
            let mut p = Params::new();
            p.insert("k".into(), json!(config.outlier_k));
            if let Some((seq, rep)) = det.detect("detect_outliers", p) {
                let rows = report_rows(&rep.data);
                let columns: BTreeSet<String> = rep.flags.iter().flat_map(|f| f.columns.iter().cloned()).collect();
                if !rows.is_empty() {
                    out.push(issue(
                        OUTLIER_KEY,
                        ToolCategory::Outliers,
                        Phase::Quality,
                        Evidence::event(seq),
                        format!("{} rows with extreme values", rows.len()),
                        Finding::Outliers { rows, columns: columns.into_iter().collect(), approved },
                    ));
                }
            }
        }
    }
    if task.task_kind == TaskKind::Classification && available(tools, "flag_noisy_labels") {
        if let Some(approved) = row_question(NOISY_KEY) {
            if let Some((seq, rep)) = det.detect("flag_noisy_labels", Params::new()) {
                let rows = report_rows(&rep.data);
                if !rows.is_empty() {
                    out.push(issue(
                        NOISY_KEY,
                        ToolCategory::NoisyLabels,
                        Phase::Quality,
                        Evidence::event(seq),
                        format!("{} rows with likely label errors", rows.len()),
                        Finding::NoisyLabels { rows, approved },
                    ));
                }
            }
        }
    }
    if input.has_test && available(tools, "detect_shift") && succeeded(history, "detect_shift").next().is_none() {
        out.push(issue(
            "data_shift",
            ToolCategory::DataShift,
            Phase::Quality,
            Evidence::rule("test_set_supplied"),
            "test set not yet compared with training data".into(),
            Finding::ShiftUnchecked,
        ));
    }
    if task.task_kind == TaskKind::Classification && available(tools, "smote_balance") && succeeded(history, "smote_balance").next().is_none() {
        if let Some((minority, share)) = minority_share(ds, &task.target_col) {
            if share < config.imbalance_share {
                out.push(issue(
                    "imbalance",
                    ToolCategory::Imbalance,
                    Phase::Quality,
                    Evidence::rule("class_share"),
                    format!("minority class '{minority}' is {:.1}% of rows", share * 100.0),
                    Finding::Imbalance { minority, share },
                ));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }

    if !model_current {
        return vec![issue("modeling", ToolCategory::ModelBuilding, Phase::Modeling, Evidence::rule("no_model"), format!("no model trained on {}", &fp[..12]), Finding::NoModel)];
    }
    if !succeeded(history, "permutation_importance").any(|m| m.input_fingerprint == fp) {
        return vec![issue(
            "interpretation",
            ToolCategory::Interpretability,
            Phase::Interpretation,
            Evidence::rule("no_explanation"),
            "model not yet explained".into(),
            Finding::NoInterpretation,
        )];
    }
    Vec::new()
}

fn minority_share(ds: &TabularDataset, target: &str) -> Option<(String, f64)> {
    let c = ds.column_index(target)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for v in ds.column_cells(c).filter(|v| !v.is_missing()) {
        *counts.entry(v.render()).or_default() += 1;
    }
    if counts.len() != 2 {
        return None;
    }
    let total: usize = counts.values().sum();
    let (name, n) = counts.iter().min_by_key(|(_, n)| **n)?;
    Some((name.clone(), *n as f64 / total as f64))
}
