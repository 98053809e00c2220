//! HTTP facade: sessions holding a history of states, plus plan previews.
//!
//! Bodies are JSON in the [`crate::schema`] format. Errors answer 404 for an
//! unknown session or preview, 400 for malformed requests and 422 for domain
//! errors, with `{"error": {"code", "message"}}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use delrev_core::semantics::{query_access, query_holders};
use delrev_core::verifier::{verify_from, VerifyError};
use delrev_core::{
    evaluate, plan, Action, AuthorizationState, ChainMode, Goal, Invariant, Mode, Permission, PlanError, Principal,
    StepDelta,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::dot::export_dot;
use crate::format::{parse_document, serialize_document, SpecDocument};
use crate::schema::{
    envelope, evaluation_name, ActionDto, DeltaDto, ErrorBody, ErrorDto, ModeDto, PlanEntryDto, ReportDto, StateDto,
};

#[derive(Clone, Debug)]
pub struct Config {
    /// A session unchanged for this long is dropped.
    pub session_ttl: Duration,
    pub preview_ttl: Duration,
    /// State cap for verification requests.
    pub verify_cap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config { session_ttl: Duration::from_secs(86_400), preview_ttl: Duration::from_secs(600), verify_cap: 200_000 }
    }
}

struct Entry {
    action: Option<Action>,
    evaluation: Option<&'static str>,
    delta: Option<StepDelta>,
    state: AuthorizationState,
}

struct Session {
    history: Vec<Entry>,
    created: SystemTime,
    modified: SystemTime,
    touched: Instant,
}

impl Session {
    fn current(&self) -> &AuthorizationState {
        &self.history.last().expect("history is never empty").state
    }

    fn at(&self, index: Option<usize>) -> Result<(usize, &AuthorizationState), ApiError> {
        let i = index.unwrap_or(self.history.len() - 1);
        self.history.get(i).map(|e| (i, &e.state)).ok_or_else(|| out_of_range(i, self.history.len()))
    }
}

struct Preview {
    action: Action,
    cost: usize,
    state: AuthorizationState,
    expires: Instant,
}

type Shared = Arc<RwLock<Session>>;

struct App {
    config: Config,
    sessions: RwLock<HashMap<String, Shared>>,
    previews: Mutex<HashMap<String, Preview>>,
}

impl App {
    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        let sessions = self.sessions.read().expect("session table lock");
        let s = sessions.get(id).cloned().ok_or_else(|| ApiError::not_found("unknown-session", id))?;
        Ok(s)
    }

    fn expire(&self) {
        let now = Instant::now();
        let ttl = self.config.session_ttl;
        self.sessions
            .write()
            .expect("session table lock")
            .retain(|_, s| s.try_read().map(|s| now.duration_since(s.touched) < ttl).unwrap_or(true));
        self.previews.lock().expect("preview lock").retain(|_, p| p.expires > now);
    }
}

/// The router over fresh, empty session storage.
pub fn router(config: Config) -> Router {
    let app = Arc::new(App { config, sessions: RwLock::new(HashMap::new()), previews: Mutex::new(HashMap::new()) });
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(summary).delete(remove))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/dot", get(dot))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/truncate", post(truncate))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/plan", post(plan_route))
        .route("/sessions/{id}/verify", post(verify))
        .route("/previews/{id}", get(preview))
        .with_state(app)
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }

    fn not_found(code: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, format!("no such id {id}"))
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn domain(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

fn out_of_range(index: usize, len: usize) -> ApiError {
    ApiError::domain("index-out-of-range", format!("index {index} outside history of length {len}"))
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: ErrorDto { code: self.code, message: self.message, line: None } };
        (self.status, Json(envelope(body))).into_response()
    }
}

type Reply = Result<Response, ApiError>;

fn ok<T: Serialize>(body: T) -> Reply {
    Ok(Json(envelope(body)).into_response())
}

/// JSON body, any content type; every failure is a 400.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("malformed-body", e.to_string()))
}

fn millis(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Deserialize)]
struct CreateBody {
    /// A spec document; its `do` lines are replayed into the history.
    spec: String,
}

#[derive(Serialize)]
struct SessionBody {
    id: String,
    length: usize,
    index: usize,
    created: u64,
    modified: u64,
    state: StateDto,
}

fn session_body(id: &str, s: &Session) -> SessionBody {
    SessionBody {
        id: id.to_string(),
        length: s.history.len(),
        index: s.history.len() - 1,
        created: millis(s.created),
        modified: millis(s.modified),
        state: s.current().into(),
    }
}

async fn create(State(app): State<Arc<App>>, bytes: Bytes) -> Reply {
    app.expire();
    let req: CreateBody = body(&bytes)?;
    let doc = parse_document(&req.spec).map_err(|e| ApiError::bad_request(e.code(), e.to_string()))?;
    let mut history = vec![Entry { action: None, evaluation: None, delta: None, state: doc.state }];
    for (i, action) in doc.script.into_iter().enumerate() {
        let prev = &history.last().expect("history is never empty").state;
        let step = evaluate(prev, &action)
            .map_err(|e| ApiError::domain(e.code(), format!("step {} ({action}): {e}", i + 1)))?;
        history.push(Entry {
            action: Some(action),
            evaluation: Some(evaluation_name(step.evaluation)),
            delta: Some(step.delta),
            state: step.state,
        });
    }
    let now = SystemTime::now();
    let session = Session { history, created: now, modified: now, touched: Instant::now() };
    let id = Uuid::new_v4().to_string();
    let reply = session_body(&id, &session);
    app.sessions.write().expect("session table lock").insert(id, Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(envelope(reply))).into_response())
}

async fn summary(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    ok(session_body(&id, &s))
}

async fn remove(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    match app.sessions.write().expect("session table lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT.into_response()),
        None => Err(ApiError::not_found("unknown-session", &id)),
    }
}

#[derive(Deserialize)]
struct IndexQuery {
    index: Option<usize>,
}

async fn state(State(app): State<Arc<App>>, Path(id): Path<String>, Query(q): Query<IndexQuery>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    let (index, st) = s.at(q.index)?;
    #[derive(Serialize)]
    struct Body {
        index: usize,
        state: StateDto,
    }
    ok(Body { index, state: st.into() })
}

#[derive(Serialize)]
struct EntryBody {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    action: Option<ActionDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<DeltaDto>,
    state: StateDto,
}

fn entry_body(index: usize, e: &Entry) -> EntryBody {
    EntryBody {
        index,
        action: e.action.as_ref().map(Into::into),
        evaluation: e.evaluation,
        delta: e.delta.as_ref().map(Into::into),
        state: (&e.state).into(),
    }
}

async fn history(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    #[derive(Serialize)]
    struct Body {
        entries: Vec<EntryBody>,
    }
    ok(Body { entries: s.history.iter().enumerate().map(|(i, e)| entry_body(i, e)).collect() })
}

async fn dot(State(app): State<Arc<App>>, Path(id): Path<String>, Query(q): Query<IndexQuery>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    let (index, st) = s.at(q.index)?;
    #[derive(Serialize)]
    struct Body {
        index: usize,
        dot: String,
    }
    ok(Body { index, dot: export_dot(st) })
}

/// The initial spec with the history's actions as `do` lines, replayable
/// by the CLI.
async fn snapshot(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    let doc = SpecDocument {
        state: s.history[0].state.clone(),
        script: s.history.iter().filter_map(|e| e.action.clone()).collect(),
    };
    #[derive(Serialize)]
    struct Body {
        document: String,
    }
    ok(Body { document: serialize_document(&doc) })
}

async fn act(State(app): State<Arc<App>>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let s = app.session(&id)?;
    let req: ActionDto = body(&bytes)?;
    let action = Action::try_from(&req).map_err(|e| ApiError::bad_request("malformed-action", e.to_string()))?;
    let mut s = s.write().expect("session lock");
    let step = evaluate(s.current(), &action).map_err(|e| ApiError::domain(e.code(), e.to_string()))?;
    let entry = Entry {
        action: Some(action),
        evaluation: Some(evaluation_name(step.evaluation)),
        delta: Some(step.delta),
        state: step.state,
    };
    let index = s.history.len();
    let reply = entry_body(index, &entry);
    s.history.push(entry);
    s.modified = SystemTime::now();
    s.touched = Instant::now();
    ok(reply)
}

#[derive(Deserialize)]
struct TruncateBody {
    index: usize,
}

async fn truncate(State(app): State<Arc<App>>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let s = app.session(&id)?;
    let req: TruncateBody = body(&bytes)?;
    let mut s = s.write().expect("session lock");
    if req.index >= s.history.len() {
        return Err(out_of_range(req.index, s.history.len()));
    }
    s.history.truncate(req.index + 1);
    s.modified = SystemTime::now();
    s.touched = Instant::now();
    ok(session_body(&id, &s))
}

#[derive(Deserialize)]
struct QueryParams {
    kind: String,
    perm: Option<String>,
    #[serde(default)]
    active: bool,
    index: Option<usize>,
}

async fn query(State(app): State<Arc<App>>, Path(id): Path<String>, Query(q): Query<QueryParams>) -> Reply {
    let s = app.session(&id)?;
    let s = s.read().expect("session lock");
    let (index, st) = s.at(q.index)?;
    let mode = if q.active { ChainMode::ActiveOnly } else { ChainMode::All };
    let principals = match (q.kind.as_str(), q.perm.as_deref()) {
        ("access", None) => query_access(st),
        ("holders", Some(p)) => {
            let p: Permission = p
                .parse()
                .map_err(|e: delrev_core::ModelError| ApiError::bad_request("bad-permission", e.to_string()))?;
            query_holders(st, p, mode)
        }
        _ => return Err(ApiError::bad_request("bad-query", "expected kind=access, or kind=holders&perm=<perm>")),
    };
    #[derive(Serialize)]
    struct Body {
        index: usize,
        kind: String,
        principals: Vec<String>,
    }
    ok(Body { index, kind: q.kind, principals: principals.iter().map(ToString::to_string).collect() })
}

#[derive(Deserialize)]
struct PlanBody {
    actor: String,
    goal: String,
}

async fn plan_route(State(app): State<Arc<App>>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let s = app.session(&id)?;
    let req: PlanBody = body(&bytes)?;
    let goal: Goal = req
        .goal
        .parse()
        .map_err(|e: delrev_core::planner::GoalError| ApiError::bad_request("bad-goal", e.to_string()))?;
    let actor = Principal::new(&req.actor).map_err(|e| ApiError::bad_request("malformed-body", e.to_string()))?;
    let current = s.read().expect("session lock").current().clone();
    let results = tokio::task::spawn_blocking(move || plan(&current, &actor, &goal))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match &e {
            PlanError::Step { error, .. } => ApiError::domain(error.code(), e.to_string()),
            PlanError::UnknownPrincipal(_) => ApiError::domain("unknown-principal", e.to_string()),
            PlanError::PrincipalMismatch => ApiError::domain("principal-mismatch", e.to_string()),
        })?;
    app.expire();
    let expires = Instant::now() + app.config.preview_ttl;
    let mut previews = app.previews.lock().expect("preview lock");
    let entries: Vec<PlanEntryDto> = results
        .into_iter()
        .map(|r| {
            let pid = Uuid::new_v4().to_string();
            let entry =
                PlanEntryDto { action: (&r.action).into(), cost: r.cost, post_state: None, preview: Some(pid.clone()) };
            previews.insert(pid, Preview { action: r.action, cost: r.cost, state: r.post_state, expires });
            entry
        })
        .collect();
    #[derive(Serialize)]
    struct Body {
        results: Vec<PlanEntryDto>,
    }
    ok(Body { results: entries })
}

async fn preview(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    let previews = app.previews.lock().expect("preview lock");
    let p = previews
        .get(&id)
        .filter(|p| p.expires > Instant::now())
        .ok_or_else(|| ApiError::not_found("unknown-preview", &id))?;
    #[derive(Serialize)]
    struct Body {
        id: String,
        action: ActionDto,
        cost: usize,
        state: StateDto,
        dot: String,
    }
    ok(Body {
        id: id.clone(),
        action: (&p.action).into(),
        cost: p.cost,
        state: (&p.state).into(),
        dot: export_dot(&p.state),
    })
}

#[derive(Deserialize)]
struct VerifyBody {
    invariant: String,
    mode: ModeDto,
}

async fn verify(State(app): State<Arc<App>>, Path(id): Path<String>, bytes: Bytes) -> Reply {
    let s = app.session(&id)?;
    let req: VerifyBody = body(&bytes)?;
    let invariant: Invariant = req
        .invariant
        .parse()
        .map_err(|_| ApiError::bad_request("unknown-invariant", format!("unknown invariant `{}`", req.invariant)))?;
    let mode: Mode = req.mode.into();
    let current = s.read().expect("session lock").current().clone();
    let cap = app.config.verify_cap;
    let report = tokio::task::spawn_blocking(move || verify_from(invariant, &current, mode, cap))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match e {
            VerifyError::ResourceBoundExceeded { .. } => ApiError::domain("resource-bound-exceeded", e.to_string()),
            VerifyError::NoPrincipals => ApiError::domain("no-principals", e.to_string()),
        })?;
    #[derive(Serialize)]
    struct Body {
        report: ReportDto,
    }
    ok(Body { report: (&report).into() })
}
