use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use probe_core::{Dataset, Task};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::state::{Event, ResponsePlan, ServiceConfig, ServiceError, ServiceState};
use crate::store::{EventLog, StoreError};

struct Shared {
    state: RwLock<ServiceState>,
    /// Held for the whole check-append-apply sequence, so it is the single
    /// writer and mutations are serialized.
    log: Mutex<EventLog>,
    export_token: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
    stimuli_dir: PathBuf,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl AppState {
    /// Build the state and replay the log at `log_path`.
    pub fn open(
        config: ServiceConfig,
        datasets: &[Dataset],
        log_path: &Path,
        stimuli_dir: &Path,
        export_token: Option<String>,
    ) -> Result<AppState, String> {
        Self::with_state_from(ServiceState::new(config, datasets), log_path, stimuli_dir, export_token)
    }

    /// Replay the log at `log_path` on top of a fresh `state`.
    pub fn with_state_from(
        mut state: ServiceState,
        log_path: &Path,
        stimuli_dir: &Path,
        export_token: Option<String>,
    ) -> Result<AppState, String> {
        let (log, events) = EventLog::open(log_path).map_err(|e| e.to_string())?;
        for (i, e) in events.iter().enumerate() {
            state.apply(e).map_err(|err| format!("{}: event {}: {err}", log_path.display(), i + 1))?;
        }
        log::info!("replayed {} events from {}", events.len(), log_path.display());
        Ok(AppState {
            shared: Arc::new(Shared {
                state: RwLock::new(state),
                log: Mutex::new(log),
                export_token,
            }),
            stimuli_dir: stimuli_dir.to_path_buf(),
        })
    }

    /// Read access to the current state.
    pub fn with_state<T>(&self, f: impl FnOnce(&ServiceState) -> T) -> T {
        f(&self.shared.state.read().expect("state lock"))
    }

    fn commit(&self, log: &mut EventLog, event: &Event) -> Result<(), ApiError> {
        log.append(event)?;
        self.shared.state.write().expect("state lock").apply(event)?;
        Ok(())
    }
}

enum ApiError {
    Service(ServiceError),
    Store(StoreError),
    BadRequest(String),
    Unauthorized,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Service(e)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Store(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::Service(e) => {
                let (status, kind) = match &e {
                    ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
                    ServiceError::UnknownTask(_) => (StatusCode::BAD_REQUEST, "UnknownTask"),
                    ServiceError::OutOfOrder { .. } => (StatusCode::CONFLICT, "OutOfOrder"),
                    ServiceError::SessionComplete(_) => (StatusCode::CONFLICT, "SessionComplete"),
                    ServiceError::SubsetExhausted { .. } => (StatusCode::CONFLICT, "SubsetExhausted"),
                    ServiceError::InvalidResponse(_) => (StatusCode::BAD_REQUEST, "InvalidResponse"),
                    ServiceError::Inconsistent(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Inconsistent"),
                };
                (status, kind, e.to_string())
            }
            ApiError::Store(e) => {
                log::error!("{e}");
                (StatusCode::INTERNAL_SERVER_ERROR, "Storage", e.to_string())
            }
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token".into()),
        };
        (status, Json(json!({"error": kind, "message": message}))).into_response()
    }
}

fn parse_task(s: &str) -> Result<Task, ApiError> {
    s.parse().map_err(ApiError::BadRequest)
}

#[derive(Deserialize)]
struct NewSession {
    task: String,
}

async fn create_session(State(app): State<AppState>, Json(body): Json<NewSession>) -> Result<Json<Value>, ApiError> {
    let task = parse_task(&body.task)?;
    let mut log = app.shared.log.lock().expect("log lock");
    let event = app.with_state(|s| s.plan_session(task, now()))?;
    app.commit(&mut log, &event)?;
    let Event::SessionCreated { session_id, trials, .. } = event else {
        unreachable!("plan_session yields a session event")
    };
    Ok(Json(json!({"session_id": session_id, "task": task, "n_trials": trials.len()})))
}

fn answer_schema(task: Task) -> Value {
    match task {
        Task::Oddball => json!({"type": "choice", "options": [1, 2, 3, 4, 5, 6]}),
        Task::Numerosity => json!({"type": "integer", "min": 1, "max": 99}),
        Task::Rotation => json!({"type": "choice", "options": [
            {"value": 1, "label": "same"},
            {"value": 0, "label": "mirror"}
        ]}),
    }
}

async fn next_trial(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    app.with_state(|s| {
        let session = s.session(&id).ok_or_else(|| ServiceError::UnknownSession(id.clone()))?;
        let Some(trial) = s.next_trial(&id)? else {
            return Ok(Json(json!({"done": true, "n_trials": session.assigned_trials.len()})));
        };
        let images: Vec<String> = trial.human_images.iter().map(|p| format!("/stimuli/{p}")).collect();
        Ok(Json(json!({
            "done": false,
            "trial_id": trial.trial_id,
            "task": trial.task,
            "index": session.cursor,
            "n_trials": session.assigned_trials.len(),
            "images": images,
            "answer_schema": answer_schema(trial.task),
            "instructions_id": format!("{}_v1", trial.task),
        })))
    })
}

#[derive(Deserialize)]
struct NewResponse {
    trial_id: String,
    answer: i64,
    rt_ms: f64,
}

async fn record_response(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<NewResponse>,
) -> Result<Json<Value>, ApiError> {
    let mut log = app.shared.log.lock().expect("log lock");
    let plan = app.with_state(|s| s.plan_response(&id, &body.trial_id, body.answer, body.rt_ms, now()))?;
    let ack = match plan {
        ResponsePlan::Duplicate(ack) => ack,
        ResponsePlan::Record(event) => {
            app.commit(&mut log, &event)?;
            let Event::ResponseRecorded(record) = &event else {
                unreachable!("plan_response records a response")
            };
            app.with_state(|s| s.ack_for(record))
        }
    };
    Ok(Json(serde_json::to_value(ack).expect("ack serializes")))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    app.with_state(|s| {
        let session = s.session(&id).ok_or_else(|| ServiceError::UnknownSession(id.clone()))?;
        Ok(Json(serde_json::to_value(session).expect("session serializes")))
    })
}

#[derive(Deserialize)]
struct TaskQuery {
    task: String,
}

async fn coverage(State(app): State<AppState>, Query(q): Query<TaskQuery>) -> Result<Json<Value>, ApiError> {
    let task = parse_task(&q.task)?;
    let report = app.with_state(|s| s.coverage(task))?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

async fn export(State(app): State<AppState>, headers: HeaderMap, Query(q): Query<TaskQuery>) -> Result<Response, ApiError> {
    if let Some(token) = &app.shared.export_token {
        let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(format!("Bearer {token}").as_str()) {
            return Err(ApiError::Unauthorized);
        }
    }
    let task = parse_task(&q.task)?;
    let body = app.with_state(|s| {
        s.export(task)
            .into_iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect::<String>()
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn health(State(app): State<AppState>) -> Json<Value> {
    Json(json!({"ok": true, "tasks": app.with_state(|s| s.tasks())}))
}

pub fn router(app: AppState) -> Router {
    let stimuli = ServeDir::new(&app.stimuli_dir);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/next", get(next_trial))
        .route("/api/session/{id}/response", post(record_response))
        .route("/api/coverage", get(coverage))
        .route("/api/export", get(export))
        .nest_service("/stimuli", stimuli)
        .with_state(app)
}

/// Serve until `shutdown` resolves. Every response is already on disk when
/// acknowledged, so nothing is left to flush afterwards.
pub async fn serve(app: AppState, addr: SocketAddr, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    serve_on(app, tokio::net::TcpListener::bind(addr).await?, shutdown).await
}

pub async fn serve_on(
    app: AppState,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await
}
