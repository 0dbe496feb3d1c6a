//! JSON-over-HTTP access to a [`CrowdService`].

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use qaspect_core::crowd::{CrowdError, CrowdService, PageView, QuizVerdict, SessionView};
use qaspect_core::judgments::JudgmentRecord;
use qaspect_core::{ClassLabel, PhaseId};

pub const EXCLUDED_HEADER: &str = "x-excluded-count";

type Shared = Arc<CrowdService>;

pub struct ApiError(CrowdError);

impl From<CrowdError> for ApiError {
    fn from(e: CrowdError) -> Self {
        ApiError(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}

impl ApiError {
    fn status_and_kind(&self) -> (StatusCode, &'static str) {
        use CrowdError::*;
        match &self.0 {
            UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown-session"),
            UnknownPhase(_) => (StatusCode::NOT_FOUND, "unknown-phase"),
            NoSuchPage { .. } => (StatusCode::NOT_FOUND, "no-such-page"),
            PageLocked { .. } => (StatusCode::CONFLICT, "page-locked"),
            NotInQuiz(_) => (StatusCode::CONFLICT, "not-in-quiz"),
            NotActive(_) => (StatusCode::CONFLICT, "not-active"),
            Duplicate { .. } => (StatusCode::CONFLICT, "duplicate"),
            WorkerRejected(_) => (StatusCode::FORBIDDEN, "worker-rejected"),
            IllegalLabel { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "illegal-label"),
            AnswerCount { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "answer-count"),
            NotOnPage { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "not-on-page"),
            TestPoolShort { .. } | ItemPoolEmpty(_) => (StatusCode::SERVICE_UNAVAILABLE, "pool-exhausted"),
            Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = self.status_and_kind();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = ErrorBody {
            kind: kind.to_string(),
            error: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartRequest {
    /// Omitted on a worker's first visit; the server issues one.
    #[serde(default)]
    pub worker_id: Option<String>,
    pub phase: PhaseId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuizRequest {
    pub answers: Vec<ClassLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub item_id: String,
    pub label: ClassLabel,
}

/// The acknowledged judgment as the worker may see it: no test grading.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct JudgmentAck {
    pub worker_id: String,
    pub item_id: String,
    pub phase: PhaseId,
    pub label: ClassLabel,
    pub submitted_at: u64,
}

impl From<JudgmentRecord> for JudgmentAck {
    fn from(r: JudgmentRecord) -> Self {
        JudgmentAck {
            worker_id: r.worker_id,
            item_id: r.item_id,
            phase: r.phase,
            label: r.label,
            submitted_at: r.submitted_at,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct PhaseQuery {
    pub phase: PhaseId,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, CrowdError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| CrowdError::Store(format!("worker thread: {e}")))?
        .map_err(ApiError)
}

async fn start(State(svc): State<Shared>, Json(req): Json<StartRequest>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let view = blocking(move || {
        let worker = req.worker_id.unwrap_or_else(|| svc.issue_worker_id());
        svc.start_session(&worker, req.phase)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn session(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(svc.session_view(&id)?))
}

async fn quiz(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<QuizRequest>,
) -> Result<Json<QuizVerdict>, ApiError> {
    Ok(Json(blocking(move || svc.submit_quiz(&id, &req.answers)).await?))
}

async fn page(State(svc): State<Shared>, Path((id, n)): Path<(String, usize)>) -> Result<Json<PageView>, ApiError> {
    Ok(Json(svc.page(&id, n)?))
}

async fn judge(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<JudgmentRequest>,
) -> Result<(StatusCode, Json<JudgmentAck>), ApiError> {
    let rec = blocking(move || svc.submit_judgment(&id, &req.item_id, req.label)).await?;
    Ok((StatusCode::CREATED, Json(rec.into())))
}

async fn abandon(State(svc): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    svc.abandon(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn jsonl(records: &[JudgmentRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

const NDJSON: &str = "application/x-ndjson";

async fn export(State(svc): State<Shared>, Query(q): Query<PhaseQuery>) -> Response {
    let (records, excluded) = svc.export(q.phase);
    let mut resp = ([(header::CONTENT_TYPE, NDJSON)], jsonl(&records)).into_response();
    resp.headers_mut()
        .insert(EXCLUDED_HEADER, HeaderValue::from(excluded as u64));
    resp
}

async fn export_tests(State(svc): State<Shared>, Query(q): Query<PhaseQuery>) -> Response {
    ([(header::CONTENT_TYPE, NDJSON)], jsonl(&svc.test_grades(q.phase))).into_response()
}

pub fn router(svc: Arc<CrowdService>) -> Router {
    Router::new()
        .route("/sessions", post(start))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/quiz", post(quiz))
        .route("/sessions/{id}/pages/{n}", get(page))
        .route("/sessions/{id}/judgments", post(judge))
        .route("/sessions/{id}/abandon", post(abandon))
        .route("/export", get(export))
        .route("/export/tests", get(export_tests))
        .with_state(svc)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, svc: Arc<CrowdService>) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Binds `addr` and serves on a fresh multi-threaded runtime until ctrl-c.
pub fn serve_blocking(addr: &str, svc: Arc<CrowdService>) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        serve(listener, svc).await
    })
}
