//! JSON-over-HTTP front end.
//!
//! `GET /task?annotator=ID`, `POST /task/{id}/label?annotator=ID` with body
//! `{"step1": 1|-1, "step2": 0|-1}`, `GET /progress` and
//! `GET /export[?partial=true]`. Errors are 4xx with `{"error": "..."}`.

use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::service::{AnnotationService, SubmitOutcome};
use crate::task::{Step1, Step2, TaskId, TaskView};
use crate::AnnotateError;

/// Milliseconds since the epoch; injectable so tests can expire leases.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64))
}

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<RwLock<AnnotationService>>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(service: AnnotationService) -> Self {
        Self::with_clock(service, system_clock())
    }

    pub fn with_clock(service: AnnotationService, clock: Clock) -> Self {
        Self { service: Arc::new(RwLock::new(service)), clock }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/task", get(next_task))
        .route("/task/{id}/label", post(submit_label))
        .route("/progress", get(progress))
        .route("/export", get(export))
        .fallback(|| async { ApiError(StatusCode::NOT_FOUND, "no such route".into()) })
        .method_not_allowed_fallback(|| async { ApiError(StatusCode::METHOD_NOT_ALLOWED, "method not allowed".into()) })
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        let status = match e {
            AnnotateError::UnknownTask(_) => StatusCode::NOT_FOUND,
            AnnotateError::Step2WithCorrect | AnnotateError::Step2Required | AnnotateError::Format { .. } => {
                StatusCode::BAD_REQUEST
            }
            AnnotateError::AlreadyFinalized(_) | AnnotateError::NotLeased { .. } | AnnotateError::PendingTasks(_) => {
                StatusCode::CONFLICT
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, message.into())
}

fn poisoned() -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, "service state is unavailable".into())
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

fn annotator(query: Result<Query<AnnotatorQuery>, QueryRejection>) -> Result<String, ApiError> {
    let Query(q) = query.map_err(|e| bad_request(e.body_text()))?;
    q.annotator.filter(|a| !a.trim().is_empty()).ok_or_else(|| bad_request("missing query parameter `annotator`"))
}

#[derive(Serialize)]
struct TaskResponse {
    task: Option<TaskView>,
}

async fn next_task(
    State(state): State<AppState>,
    query: Result<Query<AnnotatorQuery>, QueryRejection>,
) -> Result<Json<TaskResponse>, ApiError> {
    let annotator = annotator(query)?;
    let now = (state.clock)();
    let task = state.service.write().map_err(|_| poisoned())?.next_task(&annotator, now);
    Ok(Json(TaskResponse { task }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    step1: i64,
    #[serde(default)]
    step2: Option<i64>,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum SubmitResponse {
    Finalized { task_id: TaskId, head: String, relation: String, tail: String, label: i8, provenance: &'static str },
    Step2Pending { task: TaskView },
}

async fn submit_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<AnnotatorQuery>, QueryRejection>,
    body: Bytes,
) -> Result<Json<SubmitResponse>, ApiError> {
    let annotator = annotator(query)?;
    let body: LabelBody = serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid body: {e}")))?;
    let step1 = Step1::try_from(body.step1).map_err(bad_request)?;
    let step2 = body.step2.map(Step2::try_from).transpose().map_err(bad_request)?;
    let now = (state.clock)();
    let outcome = state.service.write().map_err(|_| poisoned())?.submit(&TaskId(id), &annotator, step1, step2, now)?;
    Ok(Json(match outcome {
        SubmitOutcome::Finalized { task_id, triple: [head, relation, tail], label } => SubmitResponse::Finalized {
            task_id,
            head,
            relation,
            tail,
            label: label.value(),
            provenance: "human",
        },
        SubmitOutcome::Step2Pending(task) => SubmitResponse::Step2Pending { task },
    }))
}

async fn progress(State(state): State<AppState>) -> Result<Response, ApiError> {
    let now = (state.clock)();
    let p = state.service.read().map_err(|_| poisoned())?.progress(now);
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    partial: bool,
}

async fn export(
    State(state): State<AppState>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| bad_request(e.body_text()))?;
    let text = state.service.read().map_err(|_| poisoned())?.export(q.partial)?;
    Ok(([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], text).into_response())
}
