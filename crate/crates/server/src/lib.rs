//! HTTP/JSON session service over the annolap engine.
//!
//! Sessions live in memory. Each one is locked for the duration of a
//! request, so requests on one session run one at a time while distinct
//! sessions proceed concurrently. Store writes go through a write lock and,
//! when a store file is configured, are persisted before the response.

mod error;

pub use error::ApiError;

use annolap_core::{
    describe, natural_cmp, to_tree, AnnotationDraft, AnnotationKind, AnnotationStore,
    Constellation, Dataset, Engine, Environment, HistoryEntry, LoadError, OlapOperation,
    PreferenceDoc, PreferenceStore, Session,
};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::future::Future;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

/// Header carrying the caller's user id.
pub const USER_HEADER: &str = "x-user-id";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub schema: PathBuf,
    pub data_dir: PathBuf,
    pub preferences: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Session histories are written here on shutdown and replayed on start.
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("snapshot {path}: {message}")]
    Snapshot { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    schema: Constellation,
    data: Dataset,
    preferences: RwLock<PreferenceStore>,
    annotations: RwLock<AnnotationStore>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_session: AtomicU64,
    preferences_path: Option<PathBuf>,
    annotations_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(env: Environment) -> Self {
        Self {
            schema: env.schema,
            data: env.data,
            preferences: RwLock::new(env.preferences),
            annotations: RwLock::new(env.annotations),
            sessions: RwLock::default(),
            next_session: AtomicU64::new(1),
            preferences_path: None,
            annotations_path: None,
        }
    }

    /// Loads everything named by the config. Store files that do not exist
    /// yet start empty and are created on the first write.
    pub fn load(config: &ServiceConfig) -> Result<Self, LoadError> {
        let env = Environment::load(
            &config.schema,
            &config.data_dir,
            config.preferences.as_deref(),
            config.annotations.as_deref(),
        )?;
        let mut state = Self::new(env);
        state.preferences_path = config.preferences.clone();
        state.annotations_path = config.annotations.clone();
        Ok(state)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn create_session(&self, user: &str, history: &[HistoryEntry]) -> Result<Session, ApiError> {
        let id = format!("S{}", self.next_session.fetch_add(1, Ordering::SeqCst));
        let prefs = self.preferences.read().expect("preference store poisoned");
        let annos = self.annotations.read().expect("annotation store poisoned");
        let engine = Engine {
            schema: &self.schema,
            data: &self.data,
            preferences: &prefs,
            annotations: &annos,
        };
        Session::replay(engine, id, user, history).map_err(|e| {
            let inner = ApiError::from(e);
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "replay_failed",
                inner.message,
            )
            .with_detail(json!({ "code": inner.code, "detail": inner.detail }))
        })
    }

    fn register(&self, session: Session) -> String {
        let id = session.id().to_string();
        self.sessions
            .write()
            .expect("session table poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    /// Histories of all sessions, by session id.
    pub fn snapshot(&self) -> Value {
        let sessions = self.sessions.read().expect("session table poisoned");
        let mut ids: Vec<&String> = sessions.keys().collect();
        ids.sort_by(|a, b| natural_cmp(a, b));
        let items: Vec<Value> = ids
            .into_iter()
            .map(|id| sessions[id].lock().expect("session poisoned").snapshot())
            .collect();
        json!({ "sessions": items })
    }

    /// Replays the sessions of a snapshot, keeping their ids.
    pub fn restore(&self, snapshot: &Value) -> Result<usize, String> {
        #[derive(Deserialize)]
        struct Saved {
            id: String,
            user: String,
            history: Vec<HistoryEntry>,
        }
        let items: Vec<Saved> =
            serde_json::from_value(snapshot["sessions"].clone()).map_err(|e| e.to_string())?;
        let prefs = self.preferences.read().expect("preference store poisoned");
        let annos = self.annotations.read().expect("annotation store poisoned");
        let engine = Engine {
            schema: &self.schema,
            data: &self.data,
            preferences: &prefs,
            annotations: &annos,
        };
        let mut restored = Vec::new();
        for s in items {
            let session = Session::replay(engine, s.id.clone(), s.user, &s.history)
                .map_err(|e| format!("session {}: {}", s.id, describe(&e)))?;
            if let Some(n) = s.id.strip_prefix('S').and_then(|n| n.parse::<u64>().ok()) {
                self.next_session.fetch_max(n + 1, Ordering::SeqCst);
            }
            restored.push(session);
        }
        drop((prefs, annos));
        let n = restored.len();
        for s in restored {
            self.register(s);
        }
        Ok(n)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_history))
        .route("/sessions/{id}/context", get(session_context))
        .route("/sessions/{id}/operations", post(apply_operation))
        .route(
            "/sessions/{id}/recommendations/{index}/accept",
            post(accept_recommendation),
        )
        .route("/annotations", post(add_annotation).get(list_annotations))
        .route("/preferences", post(add_preference).get(list_preferences))
        .route("/preferences/{id}", delete(delete_preference))
        .route("/schema", get(schema))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .with_state(state)
}

/// Serves until `shutdown` resolves, then writes the session snapshot if
/// configured.
pub async fn run(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    snapshot: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    if let Some(path) = snapshot.as_ref().filter(|p| p.exists()) {
        let err = |message: String| ServeError::Snapshot {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let n = state.restore(&value).map_err(err)?;
        tracing::info!(sessions = n, "restored sessions from snapshot");
    }
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    if let Some(path) = snapshot {
        let text = serde_json::to_string_pretty(&state.snapshot()).expect("snapshot serializes");
        fs::write(&path, text + "\n")?;
        tracing::info!(path = %path.display(), "wrote session snapshot");
    }
    Ok(())
}

/// Loads the config, binds `addr` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig, addr: &str) -> Result<(), ServeError> {
    let state = Arc::new(AppState::load(&config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    run(listener, state, config.snapshot, shutdown).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::bad_request(format!("invalid request body: {e}"))
            .with_detail(json!({ "line": e.line(), "column": e.column() }))
    })
}

fn header_user(headers: &HeaderMap) -> Option<String> {
    headers
        .get(USER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
}

fn missing_user() -> ApiError {
    ApiError::bad_request(format!(
        "no user: set \"user\" in the body or the {USER_HEADER} header"
    ))
}

#[derive(Deserialize, Default)]
struct NewSession {
    user: Option<String>,
    #[serde(default)]
    history: Vec<HistoryEntry>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: NewSession = if body.is_empty() {
        NewSession::default()
    } else {
        parse_body(&body)?
    };
    let user = req
        .user
        .or_else(|| header_user(&headers))
        .ok_or_else(missing_user)?;
    let session = state.create_session(&user, &req.history)?;
    let body = context_json(&session);
    let id = state.register(session);
    let mut body = body;
    body["sessionId"] = json!(id);
    Ok((StatusCode::CREATED, Json(body)))
}

fn context_json(session: &Session) -> Value {
    json!({
        "sessionId": session.id(),
        "user": session.user(),
        "context": session.current().map(|c| c.to_json()),
        "tree": session.current().map(|c| to_tree(c).to_json()),
        "stepToken": session.step_token(),
    })
}

async fn session_history(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().expect("session poisoned");
    Ok(Json(s.snapshot()))
}

async fn session_context(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().expect("session poisoned");
    Ok(Json(context_json(&s)))
}

async fn apply_operation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let op: OlapOperation = parse_body(&body)?;
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session poisoned");
    let prefs = state.preferences.read().expect("preference store poisoned");
    let annos = state.annotations.read().expect("annotation store poisoned");
    let engine = Engine {
        schema: &state.schema,
        data: &state.data,
        preferences: &prefs,
        annotations: &annos,
    };
    let outcome = s.apply(engine, &op)?;
    Ok(Json(outcome.to_json()))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AcceptBody {
    step_token: u64,
}

async fn accept_recommendation(
    State(state): State<Arc<AppState>>,
    Path((id, index)): Path<(String, usize)>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: AcceptBody = parse_body(&body)?;
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session poisoned");
    let prefs = state.preferences.read().expect("preference store poisoned");
    let annos = state.annotations.read().expect("annotation store poisoned");
    let engine = Engine {
        schema: &state.schema,
        data: &state.data,
        preferences: &prefs,
        annotations: &annos,
    };
    let outcome = s.accept(engine, index, req.step_token)?;
    Ok(Json(outcome.to_json()))
}

#[derive(Deserialize)]
struct NewAnnotation {
    kind: AnnotationKind,
    content: String,
    author: Option<String>,
    #[serde(default)]
    parent: Option<String>,
    anchor: String,
}

async fn add_annotation(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: NewAnnotation = parse_body(&body)?;
    let author = req
        .author
        .or_else(|| header_user(&headers))
        .ok_or_else(missing_user)?;
    let draft = AnnotationDraft {
        kind: req.kind,
        content: req.content,
        author,
        parent: req.parent,
        anchor: req.anchor,
    };
    let mut store = state
        .annotations
        .write()
        .expect("annotation store poisoned");
    let added = store.add(&state.schema, draft)?;
    if let Some(path) = &state.annotations_path {
        append_line(path, &added.to_json_line()).map_err(ApiError::storage)?;
    }
    Ok((StatusCode::CREATED, Json(added.to_json())))
}

#[derive(Deserialize)]
struct AnnotationQuery {
    context: Option<String>,
    session: Option<String>,
    thread: Option<String>,
}

/// `?session=S1` resolves against the session's current context (and
/// `context`, when given, must name it); `?context=CAk` alone lists the
/// annotations anchored locally on CAk; `?thread=A2` returns a discussion.
async fn list_annotations(
    State(state): State<Arc<AppState>>,
    Query(q): Query<AnnotationQuery>,
) -> Result<Json<Value>, ApiError> {
    let store = state.annotations.read().expect("annotation store poisoned");
    let items: Vec<Value> = if let Some(thread) = &q.thread {
        store
            .thread_of(thread)?
            .into_iter()
            .map(|a| a.to_json())
            .collect()
    } else if let Some(sid) = &q.session {
        let session = state.session(sid)?;
        let s = session.lock().expect("session poisoned");
        let ctx = s.current().ok_or_else(|| {
            ApiError::new(
                StatusCode::CONFLICT,
                "no_context",
                "session has no context yet",
            )
        })?;
        if let Some(c) = q.context.as_deref().filter(|c| ctx.id() != *c) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale_context",
                format!("session is at {}, not {c}", ctx.id()),
            )
            .with_detail(json!({ "current": ctx.id() })));
        }
        let table = annolap_core::evaluate(&state.schema, ctx, &state.data).map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "evaluation_failed",
                describe(&e),
            )
        })?;
        store
            .resolve(ctx, Some(&table))
            .into_iter()
            .map(|a| a.to_json())
            .collect()
    } else if let Some(c) = &q.context {
        store
            .iter()
            .filter(|a| a.anchor.context().is_some_and(|id| id == c.as_str()))
            .map(|a| a.to_json())
            .collect()
    } else {
        store.iter().map(|a| a.to_json()).collect()
    };
    Ok(Json(json!({ "items": items })))
}

#[derive(Deserialize)]
struct PreferenceQuery {
    owner: Option<String>,
}

async fn add_preference(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let mut raw: Value = parse_body(&body)?;
    if raw.get("owner").is_none_or(Value::is_null) {
        let owner = header_user(&headers).ok_or_else(missing_user)?;
        raw["owner"] = json!(owner);
    }
    let doc: PreferenceDoc = serde_json::from_value(raw)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let mut store = state
        .preferences
        .write()
        .expect("preference store poisoned");
    let added = store.add(&state.schema, &doc)?.clone();
    if let Some(path) = &state.preferences_path {
        let line = serde_json::to_string(&added.to_doc()).expect("preference serializes");
        append_line(path, &line).map_err(ApiError::storage)?;
    }
    Ok((StatusCode::CREATED, Json(added.to_json())))
}

async fn list_preferences(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PreferenceQuery>,
) -> Json<Value> {
    let store = state.preferences.read().expect("preference store poisoned");
    let items: Vec<Value> = store
        .iter()
        .filter(|p| q.owner.as_deref().is_none_or(|o| p.owner == o))
        .map(|p| p.to_json())
        .collect();
    Json(json!({ "items": items }))
}

async fn delete_preference(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let mut store = state
        .preferences
        .write()
        .expect("preference store poisoned");
    let removed = store.remove(&id)?;
    if let Some(path) = &state.preferences_path {
        let mut buf = Vec::new();
        store.write_jsonl(&mut buf).map_err(ApiError::storage)?;
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, buf)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(ApiError::storage)?;
    }
    Ok(Json(removed.to_json()))
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::from_str(&state.schema.to_json()).expect("schema serializes"))
}

fn append_line(path: &std::path::Path, line: &str) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")
}
