//! HTTP/SSE API. Each session runs its loop on its own OS thread; API
//! writers enqueue commands that the loop applies between iterations, and
//! readers see the snapshot the loop last published.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curate_core::dataset::to_csv_string;
use curate_core::feedback::{Answer, Author, ExpertQuestion};
use curate_core::session::{ExpertReply, ExpertScript, ExpertSource, ScriptedExpert};
use curate_core::{
    Control, EventRecord, Plan, Session, SessionError, SessionReport, SessionStatus, TabularDataset, ToolRegistry,
};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use crate::setup::{build_inputs, build_policy, ProviderOptions, TaskOptions};

/// Answers from a script when a rule matches; otherwise waits for the API.
pub struct ScriptThenWait(pub Option<ScriptedExpert>);

impl ExpertSource for ScriptThenWait {
    fn reply(&mut self, q: &ExpertQuestion) -> ExpertReply {
        match self.0.as_mut().map(|s| s.reply(q)) {
            Some(ExpertReply::Answer(a)) => ExpertReply::Answer(a),
            _ => ExpertReply::Wait,
        }
    }
}

enum Command {
    Feedback { question_id: String, answer: Answer, reply: oneshot::Sender<Result<(), SessionError>> },
    Control { control: Control, reply: oneshot::Sender<Result<(), SessionError>> },
}

/// What readers see: replaced wholesale after every loop iteration.
#[derive(Clone)]
struct Snapshot {
    summary: Value,
    report: SessionReport,
    plan: Plan,
    checkpoints: Vec<Value>,
    dataset: Arc<TabularDataset>,
}

struct Handle {
    commands: Mutex<mpsc::Sender<Command>>,
    snapshot: RwLock<Arc<Snapshot>>,
    history: Mutex<Vec<EventRecord>>,
    live: broadcast::Sender<EventRecord>,
    cancel: Arc<AtomicBool>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    registry: Arc<ToolRegistry>,
    root: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Handle>>>,
    counter: AtomicU64,
}

impl AppState {
    /// `root` holds one directory per session; `None` keeps sessions in memory.
    pub fn new(registry: Arc<ToolRegistry>, root: Option<PathBuf>) -> Self {
        Self { inner: Arc::new(Inner { registry, root, sessions: RwLock::new(BTreeMap::new()), counter: AtomicU64::new(0) }) }
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.inner.sessions.read().expect("session map").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/plan", get(get_plan))
        .route("/sessions/{id}/checkpoints", get(get_checkpoints))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/control", post(post_control))
        .route("/sessions/{id}/dataset", get(get_dataset))
        .route("/tools", get(list_tools))
        .with_state(state)
}

pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(port, "listening");
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session '{id}'"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::Conflict(..) => StatusCode::CONFLICT,
            SessionError::UnknownQuestion(_) => StatusCode::NOT_FOUND,
            SessionError::Invalid(_) | SessionError::Task(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Bank(_) | SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    /// One or more CSV paths; extra files are offered to `merge_files`.
    pub data: Vec<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub task: TaskOptions,
    #[serde(default)]
    pub provider: ProviderOptions,
    #[serde(default)]
    pub expert_script: Option<ExpertScript>,
    #[serde(default)]
    pub max_iterations: Option<u64>,
    #[serde(default)]
    pub min_rows: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn snapshot_of(s: &Session) -> Snapshot {
    let checkpoints = s
        .bank()
        .states()
        .iter()
        .map(|st| {
            json!({
                "step": st.step,
                "dataset_ref": st.dataset_ref,
                "plan_revision": st.plan.revision,
                "episodes": st.episode_meta.len(),
                "last_tool": st.episode_meta.last().map(|m| m.tool.clone()),
            })
        })
        .collect();
    Snapshot { summary: s.summary(), report: s.report(), plan: s.plan().clone(), checkpoints, dataset: s.current_dataset() }
}

fn spawn_session(state: &AppState, body: CreateSession) -> Result<String, ApiError> {
    let bad = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
    let id = loop {
        let n = state.inner.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("s{n}");
        // directories from an earlier server run keep their ids
        if !state.inner.root.as_ref().is_some_and(|r| r.join(&id).exists()) {
            break id;
        }
    };
    let inputs = build_inputs(&body.data, body.test.as_deref(), &body.task).map_err(|e| bad(e.to_string()))?;
    let policy = build_policy(&body.provider).map_err(|e| bad(e.to_string()))?;
    let mut config = curate_core::SessionConfig::default();
    if let Some(m) = body.max_iterations {
        config.max_iterations = m;
    }
    if let Some(m) = body.min_rows {
        config.coordinator.min_rows = m;
    }
    if let Some(s) = body.seed {
        config.seed = s;
    }
    let expert = body.expert_script.map(ScriptedExpert::new).transpose().map_err(|e| bad(e.to_string()))?;
    let workdir = state.inner.root.as_ref().map(|r| r.join(&id));
    let mut session = Session::new(id.clone(), inputs, config, state.inner.registry.clone(), policy, workdir.as_deref())?;

    let (live, _) = broadcast::channel(1024);
    let (tx, rx) = mpsc::channel();
    let handle = Arc::new(Handle {
        commands: Mutex::new(tx),
        snapshot: RwLock::new(Arc::new(snapshot_of(&session))),
        history: Mutex::new(session.bank().events().to_vec()),
        live,
        cancel: session.cancel_flag(),
    });
    let weak = Arc::downgrade(&handle);
    session.bank_mut().set_listener(move |ev| {
        if let Some(h) = weak.upgrade() {
            // the history lock also orders broadcasts, so subscribers never miss or repeat an event
            let mut hist = h.history.lock().expect("history");
            hist.push(ev.clone());
            let _ = h.live.send(ev.clone());
        }
    });
    state.inner.sessions.write().expect("session map").insert(id.clone(), handle.clone());
    let runner = handle.clone();
    thread::Builder::new()
        .name(format!("session-{id}"))
        .spawn(move || run_loop(session, ScriptThenWait(expert), rx, runner))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(id)
}

fn run_loop(mut session: Session, mut expert: ScriptThenWait, rx: mpsc::Receiver<Command>, handle: Arc<Handle>) {
    let publish = |s: &Session| *handle.snapshot.write().expect("snapshot") = Arc::new(snapshot_of(s));
    loop {
        let cmd = if session.status() == SessionStatus::Running {
            match rx.try_recv() {
                Ok(c) => Some(c),
                Err(mpsc::TryRecvError::Empty) => None,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        } else {
            match rx.recv() {
                Ok(c) => Some(c),
                Err(_) => return,
            }
        };
        if let Some(cmd) = cmd {
            match cmd {
                Command::Feedback { question_id, answer, reply } => {
                    let r = if session.open_question().is_none() && !session.status().is_terminal() {
                        Err(SessionError::Conflict(session.status(), "no open question".into()))
                    } else {
                        session.answer(&question_id, answer, Author::Expert)
                    };
                    let _ = reply.send(r);
                }
                Command::Control { control, reply } => {
                    // the loop may already have stopped on the cancel flag set by the handler
                    let r = if control == Control::Cancel && session.status() == SessionStatus::Cancelled {
                        Ok(())
                    } else {
                        session.control(&control)
                    };
                    let _ = reply.send(r);
                }
            }
            publish(&session);
            continue;
        }
        if let Err(e) = session.step(&mut expert) {
            tracing::error!(session = session.id(), error = %e, "session step failed");
            publish(&session);
            // persistent storage is broken; keep serving reads and rejecting writes
            while let Ok(cmd) = rx.recv() {
                let err = || SessionError::Io(format!("session stopped: {e}"));
                match cmd {
                    Command::Feedback { reply, .. } | Command::Control { reply, .. } => {
                        let _ = reply.send(Err(err()));
                    }
                }
            }
            return;
        }
        publish(&session);
    }
}

async fn create_session(State(state): State<AppState>, Json(body): Json<CreateSession>) -> Result<impl IntoResponse, ApiError> {
    let st = state.clone();
    let id = tokio::task::spawn_blocking(move || spawn_session(&st, body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    let map = state.inner.sessions.read().expect("session map");
    let list: Vec<Value> = map.values().map(|h| h.snapshot.read().expect("snapshot").summary.clone()).collect();
    Json(Value::Array(list))
}

fn snap(state: &AppState, id: &str) -> Result<Arc<Snapshot>, ApiError> {
    Ok(state.get(id)?.snapshot.read().expect("snapshot").clone())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = snap(&state, &id)?;
    let mut v = s.summary.clone();
    v["report"] = serde_json::to_value(&s.report).unwrap_or(Value::Null);
    Ok(Json(v))
}

async fn get_plan(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Plan>, ApiError> {
    Ok(Json(snap(&state, &id)?.plan.clone()))
}

async fn get_checkpoints(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<Value>>, ApiError> {
    Ok(Json(snap(&state, &id)?.checkpoints.clone()))
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = snap(&state, &id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], to_csv_string(&s.dataset)).into_response())
}

async fn list_tools(State(state): State<AppState>) -> Json<Value> {
    Json(serde_json::to_value(state.inner.registry.manifests().collect::<Vec<_>>()).unwrap_or(Value::Null))
}

fn sse_event(ev: &EventRecord) -> Result<Event, Infallible> {
    Ok(Event::default().id(ev.seq.to_string()).event(ev.kind.as_str()).data(serde_json::to_string(ev).expect("event serializes")))
}

/// History first, then live events, with no gaps or repeats.
pub fn event_stream(state: &AppState, id: &str) -> Result<impl Stream<Item = Result<Event, Infallible>> + use<>, ApiError> {
    let h = state.get(id)?;
    let (history, rx) = {
        let hist = h.history.lock().expect("history");
        (hist.clone(), h.live.subscribe())
    };
    let last = history.last().map(|e| e.seq);
    let past = stream::iter(history.into_iter().map(|e| sse_event(&e)).collect::<Vec<_>>());
    let live = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => return Some((ev, rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    })
    .filter(move |ev| std::future::ready(last.is_none_or(|l| ev.seq > l)))
    .map(|ev| sse_event(&ev));
    Ok(past.chain(live))
}

async fn stream_events(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Sse::new(event_stream(&state, &id)?).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
pub struct FeedbackBody {
    pub question_id: String,
    pub answer: Answer,
}

async fn send(h: Arc<Handle>, make: impl FnOnce(oneshot::Sender<Result<(), SessionError>>) -> Command) -> Result<(), ApiError> {
    let (tx, rx) = oneshot::channel();
    h.commands
        .lock()
        .expect("command queue")
        .send(make(tx))
        .map_err(|_| ApiError::new(StatusCode::GONE, "session loop has stopped"))?;
    rx.await.map_err(|_| ApiError::new(StatusCode::GONE, "session loop has stopped"))?.map_err(ApiError::from)
}

async fn post_feedback(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<FeedbackBody>) -> Result<Json<Value>, ApiError> {
    let h = state.get(&id)?;
    send(h.clone(), |reply| Command::Feedback { question_id: body.question_id, answer: body.answer, reply }).await?;
    Ok(Json(snap(&state, &id)?.summary.clone()))
}

async fn post_control(State(state): State<AppState>, Path(id): Path<String>, Json(control): Json<Control>) -> Result<Json<Value>, ApiError> {
    let h = state.get(&id)?;
    if control == Control::Cancel && !h.snapshot.read().expect("snapshot").report.status.is_terminal() {
        // lets a long-running tool stop before the loop picks up the command
        h.cancel.store(true, Ordering::SeqCst);
    }
    send(h.clone(), |reply| Command::Control { control, reply }).await?;
    Ok(Json(snap(&state, &id)?.summary.clone()))
}
