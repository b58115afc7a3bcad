use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use curate_cli::server::{router, AppState};
use curate_core::dataset::write_csv_path;
use curate_core::harness::{corrupt, gen_clean, CleanSpec, CorruptionStep};
use curate_core::state::read_log;
use curate_core::{TaskKind, ToolRegistry};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(root: &Path) -> Router {
    router(AppState::new(Arc::new(ToolRegistry::with_builtins()), Some(root.to_path_buf())))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into())))
}

/// Classification data; with `leak` a post-hoc copy of the label is added.
fn write_data(dir: &Path, leak: bool) -> std::path::PathBuf {
    let mut spec = CleanSpec::new(TaskKind::Classification, 150);
    spec.numeric = 5;
    let (clean, task) = gen_clean(&spec, 3).unwrap();
    let steps = if leak { vec![CorruptionStep::new("add_leak_column", json!({}))] } else { vec![] };
    let c = corrupt(&clean, &task, &steps, 3).unwrap();
    let path = dir.join(if leak { "leaky.csv" } else { "clean.csv" });
    write_csv_path(&c.train, &path).unwrap();
    path
}

/// Declines every question except those whose key starts with `keep_open`.
fn script(keep_open: Option<&str>) -> Value {
    let keys = ["noisy_labels", "outliers", "redundancy", "aggregation_policy", "degraded", "text_patterns", "label_leakage"];
    let rules: Vec<Value> = keys
        .iter()
        .filter(|k| keep_open.is_none_or(|o| !k.starts_with(o)))
        .map(|k| json!({ "key": k, "answer": "decline", "times": 100 }))
        .collect();
    json!({ "rules": rules })
}

async fn create(app: &Router, data: &Path, keep_open: Option<&str>) -> String {
    let (status, body) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({ "data": [data], "task": { "kind": "classification", "target": "outcome" }, "expert_script": script(keep_open) })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn wait_for(app: &Router, id: &str, want: &[&str]) -> Value {
    let start = Instant::now();
    loop {
        let (_, s) = call(app, "GET", &format!("/sessions/{id}"), None).await;
        if want.contains(&s["status"].as_str().unwrap_or("")) {
            return s;
        }
        assert!(start.elapsed() < Duration::from_secs(60), "session stuck in {}", s["status"]);
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_session_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for uri in ["/sessions/nope", "/sessions/nope/plan", "/sessions/nope/events", "/sessions/nope/dataset"] {
        assert_eq!(call(&app, "GET", uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = call(&app, "POST", "/sessions/nope/control", Some(json!({ "action": "retry" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, tools) = call(&app, "GET", "/tools", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(tools.as_array().unwrap().iter().any(|t| t["name"] == "knn_shapley"));
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_create_is_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({ "data": [dir.path().join("missing.csv")], "task": { "kind": "classification", "target": "outcome" } });
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn finished_session_rejects_writes_and_serves_reads() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let app = app(dir.path());
    let id = create(&app, &data, None).await;
    let s = wait_for(&app, &id, &["converged", "failed"]).await;
    assert_eq!(s["status"], "converged", "{s}");

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({ "question_id": "q1", "answer": { "type": "choice", "value": "keep" } }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    for action in [json!({ "action": "retry" }), json!({ "action": "approve" }), json!({ "action": "backtrack", "target_step": 0 })] {
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/control"), Some(action.clone())).await;
        assert_eq!(status, StatusCode::CONFLICT, "{action} {body}");
    }

    let req = Request::get(format!("/sessions/{id}/dataset")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/csv");
    let csv = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert_eq!(csv, std::fs::read_to_string(dir.path().join(&id).join("curated.csv")).unwrap());

    let (_, checkpoints) = call(&app, "GET", &format!("/sessions/{id}/checkpoints"), None).await;
    assert_eq!(checkpoints[0]["step"], 0);
    let (_, list) = call(&app, "GET", "/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn events_stream_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let app = app(dir.path());
    let id = create(&app, &data, None).await;
    wait_for(&app, &id, &["converged", "failed"]).await;
    let logged = read_log(&dir.path().join(&id).join("events.ndjson")).unwrap();

    let req = Request::get(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let mut text = String::new();
    let mut streamed = Vec::new();
    while streamed.len() < logged.len() {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame()).await.expect("stream stalled").unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        streamed = text.lines().filter_map(|l| l.strip_prefix("data: ")).map(|l| serde_json::from_str::<Value>(l).unwrap()).collect();
    }
    let expected: Vec<Value> = logged.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    assert_eq!(streamed, expected);
    let names: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("event: ")).collect();
    assert_eq!(names.first(), Some(&"state_appended"));
    assert_eq!(names.last(), Some(&"report"));
}

#[tokio::test(flavor = "multi_thread")]
async fn leakage_question_pauses_until_answered() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), true);
    let app = app(dir.path());
    let id = create(&app, &data, Some("label_leakage")).await;
    let s = wait_for(&app, &id, &["awaiting_feedback", "converged", "failed"]).await;
    assert_eq!(s["status"], "awaiting_feedback", "{s}");
    let q = &s["open_question"];
    assert_eq!(q["key"], "label_leakage");
    assert!(q["options"].to_string().contains("outcome_followup"), "{q}");

    // still paused: nothing moves while the question is open
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, again) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(again["step"], s["step"]);

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({ "question_id": "nope", "answer": { "type": "columns", "value": ["outcome_followup"] } }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let qid = q["id"].as_str().unwrap();
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({ "question_id": qid, "answer": { "type": "columns", "value": ["outcome_followup"] } }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let done = wait_for(&app, &id, &["converged", "failed"]).await;
    assert_eq!(done["status"], "converged", "{done}");
    assert!(!done["report"]["columns"].as_array().unwrap().iter().any(|c| c == "outcome_followup"));
}

#[tokio::test(flavor = "multi_thread")]
async fn backtrack_and_cancel_through_control() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), true);
    let app = app(dir.path());
    let id = create(&app, &data, Some("label_leakage")).await;
    let s = wait_for(&app, &id, &["awaiting_feedback"]).await;
    let step = s["step"].as_u64().unwrap();
    assert!(step >= 1, "{s}");

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/control"), Some(json!({ "action": "backtrack", "target_step": step }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/control"), Some(json!({ "action": "backtrack", "target_step": 0 }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let log = read_log(&dir.path().join(&id).join("events.ndjson")).unwrap();
    let bt = log.iter().rev().find(|e| e.kind.as_str() == "backtrack").expect("backtrack event");
    assert_eq!(bt.payload["from"], step);
    assert_eq!(bt.payload["to"], 0);
    assert_eq!(bt.payload["initiator"], "user");

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/control"), Some(json!({ "action": "cancel" }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    wait_for(&app, &id, &["cancelled"]).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/control"), Some(json!({ "action": "retry" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
