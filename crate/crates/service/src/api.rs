//! HTTP routes over labeling sessions.

use crate::session::{Session, SessionError, SessionSpec};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use stepwise_core::elicit::{Label, Puzzle};

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("request exceeded {}s", REQUEST_TIMEOUT.as_secs())]
    Timeout,
    #[error("worker failed: {0}")]
    Internal(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Timeout => StatusCode::GATEWAY_TIMEOUT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Session(e) => match e {
                SessionError::Config(_) | SessionError::BadCheckpoint(_) | SessionError::LabelCount { .. } => {
                    StatusCode::BAD_REQUEST
                }
                SessionError::Finished => StatusCode::GONE,
                SessionError::NoPendingQuery => StatusCode::CONFLICT,
                SessionError::MissingCheckpoint(_) => StatusCode::NOT_FOUND,
                SessionError::Elicit(_) | SessionError::Explain(_) | SessionError::Io(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

pub struct AppState {
    /// Puzzle sets by name.
    pub sets: BTreeMap<String, Vec<Puzzle>>,
    pub default_set: String,
    /// Directory for session logs; `None` keeps sessions in memory only.
    pub session_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(sets: BTreeMap<String, Vec<Puzzle>>, default_set: String, session_dir: Option<PathBuf>) -> Self {
        AppState {
            sets,
            default_set,
            session_dir,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/evaluation", get(evaluation).post(label_evaluation))
        .with_state(state)
}

/// Runs session work off the async executor, bounded by the request timeout.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::time::timeout(REQUEST_TIMEOUT, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => Err(ApiError::Internal(e.to_string())),
        Err(_) => Err(ApiError::Timeout),
    }
}

fn with_session<T, F>(state: &Shared, id: &str, f: F) -> impl std::future::Future<Output = Result<T, ApiError>>
where
    F: FnOnce(&mut Session) -> Result<T, SessionError> + Send + 'static,
    T: Send + 'static,
{
    let session = state.session(id);
    blocking(move || {
        let session = session?;
        let mut s = session.lock().map_err(|_| ApiError::Internal("session poisoned".into()))?;
        f(&mut s).map_err(ApiError::from)
    })
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let spec: SessionSpec = parse(&body)?;
    let config = spec.elicit_config()?;
    let set = spec.puzzles.clone().unwrap_or_else(|| state.default_set.clone());
    if !state.sets.contains_key(&set) {
        return Err(ApiError::BadRequest(format!("unknown puzzle set {set:?}")));
    }
    let st = state.clone();
    let session = blocking(move || {
        let id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !st.sessions.lock().expect("session map poisoned").contains_key(&id) {
                break id;
            }
        };
        Ok(Session::create(
            id,
            &set,
            &st.sets[&set],
            config,
            st.session_dir.as_deref(),
        )?)
    })
    .await?;
    let id = session.id.clone();
    state
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

async fn status(State(state): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(&state, &id, |s| Ok(s.status())).await?))
}

async fn query(State(state): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(&state, &id, |s| s.query()).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Choice {
    choice: Label,
}

async fn label(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let Choice { choice } = parse(&body)?;
    Ok(Json(with_session(&state, &id, move |s| s.label(choice)).await?))
}

#[derive(Deserialize)]
struct Checkpoint {
    checkpoint: usize,
}

async fn evaluation(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(Checkpoint { checkpoint }): Query<Checkpoint>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(with_session(&state, &id, move |s| s.evaluation(checkpoint)).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationLabels {
    labels: Vec<Label>,
}

async fn label_evaluation(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(Checkpoint { checkpoint }): Query<Checkpoint>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let EvaluationLabels { labels } = parse(&body)?;
    Ok(Json(
        with_session(&state, &id, move |s| s.label_evaluation(checkpoint, &labels)).await?,
    ))
}
