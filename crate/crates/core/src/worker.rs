//! Executes the head-of-plan episode: one tool invocation, retried per a
//! fixed adjustment table, with every attempt logged.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::TabularDataset;
use crate::models::FittedModel;
use crate::plan::{EpisodeId, EpisodeMeta, EpisodeStatus, Plan, PlanError};
use crate::registry::{AuxInputs, Params, ParamsExt, ToolKind, ToolRegistry, ToolReport};
use crate::state::{BankError, EventKind, StateBank};
use crate::task::TaskSpec;

pub const DEFAULT_MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformProposal {
    pub episode: EpisodeId,
    pub tool: String,
    pub params: Params,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetryAction {
    Retry(Params),
    GiveUp,
}

/// Decides what to do after failed attempt number `attempt` (1-based).
/// Known tools get a parameter adjustment; external tools are re-run as is;
/// anything else gets one plain retry.
pub fn retry_policy(tool: &str, kind: Option<ToolKind>, params: &Params, attempt: u32, max_retries: u32) -> RetryAction {
    if attempt > max_retries {
        return RetryAction::GiveUp;
    }
    let with = |key: &str, v: Value| {
        let mut p = params.clone();
        p.insert(key.to_string(), v);
        RetryAction::Retry(p)
    };
    let adjusted = match tool {
        "impute" if params.str_opt("strategy") == Some("knn") => Some(with("strategy", json!("mean"))),
        "smote_balance" | "knn_shapley" => {
            let k = params.usize_or("k", 5);
            (k > 1).then(|| with("k", json!(k - 1)))
        }
        "flag_noisy_labels" | "train_evaluate" | "leakage_probe" => {
            let f = params.usize_or("folds", 5);
            (f > 2).then(|| with("folds", json!(f - 1)))
        }
        _ => None,
    };
    match (adjusted, kind) {
        (Some(a), _) => a,
        (None, Some(ToolKind::External)) => RetryAction::Retry(params.clone()),
        (None, _) if attempt == 1 => RetryAction::Retry(params.clone()),
        (None, _) => RetryAction::GiveUp,
    }
}

/// Human-readable summary plus machine fields for the episode's last event.
pub fn summarize_episode(meta: &EpisodeMeta, report: &ToolReport) -> Value {
    let flags: usize = report.flags.len();
    let text = if !meta.succeeded {
        format!(
            "{} {} failed after {} attempts: {}",
            meta.episode_id,
            meta.tool,
            meta.retry_count + 1,
            report.summary
        )
    } else if meta.input_fingerprint == meta.output_fingerprint {
        format!("{} {}: {} ({flags} flags)", meta.episode_id, meta.tool, report.summary)
    } else {
        format!(
            "{} {}: {}; rows {} → {}, columns {} → {}",
            meta.episode_id,
            meta.tool,
            report.summary,
            meta.rows_before,
            meta.rows_after,
            meta.columns_before.len(),
            meta.columns_after.len()
        )
    };
    let removed: Vec<&String> = meta.columns_before.iter().filter(|c| !meta.columns_after.contains(c)).collect();
    let added: Vec<&String> = meta.columns_after.iter().filter(|c| !meta.columns_before.contains(c)).collect();
    json!({
        "episode": meta.episode_id,
        "tool": meta.tool,
        "status": if meta.succeeded { "done" } else { "failed" },
        "summary": text,
        "rows_before": meta.rows_before,
        "rows_after": meta.rows_after,
        "columns_removed": removed,
        "columns_added": added,
        "flags": flags,
        "metrics": report.metrics,
    })
}

pub struct WorkerContext<'a> {
    pub registry: &'a ToolRegistry,
    pub task: &'a TaskSpec,
    pub aux: &'a AuxInputs,
    pub seed: u64,
    pub max_retries: u32,
}

pub struct EpisodeOutcome {
    pub dataset: TabularDataset,
    pub meta: EpisodeMeta,
    pub report: ToolReport,
    pub model: Option<FittedModel>,
}

impl EpisodeOutcome {
    pub fn succeeded(&self) -> bool {
        self.meta.succeeded
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Bank(#[from] BankError),
}

fn cancelled(aux: &AuxInputs) -> bool {
    aux.cancel.as_ref().is_some_and(|c| c.load(std::sync::atomic::Ordering::SeqCst))
}

/// Runs episode `id` of `plan` against `dataset` (the state at `step`). The
/// episode ends done or failed with completion metadata; on failure the
/// returned dataset is the input.
pub fn execute_episode(
    ctx: &WorkerContext<'_>,
    bank: &mut StateBank,
    plan: &mut Plan,
    id: &EpisodeId,
    dataset: &TabularDataset,
    step: u64,
) -> Result<EpisodeOutcome, WorkerError> {
    let episode = plan.get(id).ok_or_else(|| PlanError::UnknownEpisode(id.clone()))?.clone();
    plan.activate(id)?;
    let kind = ctx.registry.manifest(&episode.tool).map(|m| m.kind);
    let mut params = episode.params.clone();
    let mut attempt: u32 = 0;
    let names = |d: &TabularDataset| d.column_names().into_iter().map(str::to_string).collect::<Vec<_>>();

    loop {
        attempt += 1;
        let (out, report, model, used) =
            match ctx.registry.invoke(&episode.tool, dataset, ctx.task, &params, ctx.seed, ctx.aux) {
                Ok(inv) => (inv.dataset, inv.report, inv.model, inv.params),
                Err(e) => (dataset.clone(), ToolReport::failed(&episode.tool, ctx.seed, e.to_string()), None, params.clone()),
            };
        let next = if report.is_ok() {
            None
        } else if cancelled(ctx.aux) {
            Some(RetryAction::GiveUp)
        } else if ctx.registry.resolve_params(&episode.tool, &params).is_err() || !ctx.registry.contains(&episode.tool) {
            // the call never started; retrying cannot help
            Some(RetryAction::GiveUp)
        } else {
            Some(retry_policy(&episode.tool, kind, &params, attempt, ctx.max_retries))
        };
        let report_ref = bank.next_seq();
        let mut payload = json!({
            "episode": episode.id,
            "tool": episode.tool,
            "params": used,
            "attempt": attempt,
            "input_fingerprint": dataset.fingerprint(),
            "output_fingerprint": out.fingerprint(),
            "report": report,
        });
        match next {
            Some(RetryAction::Retry(p)) => {
                bank.log(EventKind::ToolInvoked, payload)?;
                params = p;
            }
            _ => {
                let ok = report.is_ok();
                let meta = EpisodeMeta {
                    episode_id: episode.id.clone(),
                    tool: episode.tool.clone(),
                    params: used,
                    started_step: step,
                    finished_step: step + 1,
                    input_fingerprint: dataset.fingerprint().to_string(),
                    output_fingerprint: out.fingerprint().to_string(),
                    report_ref: Some(report_ref),
                    retry_count: attempt - 1,
                    succeeded: ok,
                    rows_before: dataset.row_count(),
                    rows_after: out.row_count(),
                    columns_before: names(dataset),
                    columns_after: names(&out),
                    metric: if ok { report.data.get("value").and_then(Value::as_f64) } else { None },
                };
                payload["episode_summary"] = summarize_episode(&meta, &report);
                bank.log(EventKind::ToolInvoked, payload)?;
                let status = if ok { EpisodeStatus::Done } else { EpisodeStatus::Failed };
                plan.finish(id, status, Some(meta.clone()))?;
                return Ok(EpisodeOutcome { dataset: out, meta, report, model });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(pairs: &[(&str, Value)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn knn_impute_falls_back_to_mean() {
        let a = retry_policy("impute", Some(ToolKind::Builtin), &p(&[("strategy", json!("knn"))]), 1, 2);
        assert_eq!(a, RetryAction::Retry(p(&[("strategy", json!("mean"))])));
    }

    #[test]
    fn gives_up_past_limit() {
        assert_eq!(retry_policy("impute", None, &p(&[("strategy", json!("knn"))]), 3, 2), RetryAction::GiveUp);
    }

    #[test]
    fn unknown_tool_gets_one_plain_retry() {
        let params = p(&[("x", json!(1))]);
        assert_eq!(retry_policy("mystery", None, &params, 1, 2), RetryAction::Retry(params.clone()));
        assert_eq!(retry_policy("mystery", None, &params, 2, 2), RetryAction::GiveUp);
    }

    #[test]
    fn smote_k_decrements() {
        assert_eq!(retry_policy("smote_balance", None, &Params::new(), 1, 2), RetryAction::Retry(p(&[("k", json!(4))])));
    }
}
