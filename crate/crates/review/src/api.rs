//! JSON HTTP API over a [`ReviewStore`].
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | GET | `/api/next` | `?rater=ID` | `{"instance": BenchmarkInstance or null}` |
//! | POST | `/api/verdicts` | `ReviewVerdict` | `ReviewAggregate` |
//! | GET | `/api/agreement` | `?question=feedback\|text\|visual` | `Histogram` |
//! | GET | `/api/export` | | `Export` |
//! | GET | `/api/instances/{id}` | | `{"instance", "aggregate"}` |
//!
//! Errors are `{"error": {"code", "message"}}`. The UI bundle, when given,
//! is served from `/`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use misalign_core::eval::Question;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{ReviewError, ReviewStore, ReviewVerdict};

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::UnknownRater(_) => (StatusCode::FORBIDDEN, "unknown_rater"),
            ReviewError::UnknownInstance(_) => (StatusCode::NOT_FOUND, "unknown_instance"),
            ReviewError::InvalidVerdict(_) => (StatusCode::BAD_REQUEST, "invalid_verdict"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), "invalid_verdict", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_query", e.body_text())
    }
}

type Shared = State<Arc<ReviewStore>>;

#[derive(Deserialize)]
struct NextQuery {
    rater: String,
}

#[derive(Deserialize)]
struct AgreementQuery {
    question: String,
}

async fn next(State(s): Shared, q: Result<Query<NextQuery>, QueryRejection>) -> Result<Json<serde_json::Value>, ApiError> {
    let Query(q) = q?;
    let inst = s.assign_next(&q.rater)?;
    Ok(Json(json!({ "instance": inst })))
}

async fn submit(State(s): Shared, body: Result<Json<ReviewVerdict>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(v) = body?;
    let store = s.clone();
    let agg = tokio::task::spawn_blocking(move || store.submit_verdict(v))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(agg).into_response())
}

async fn agreement(State(s): Shared, q: Result<Query<AgreementQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let question: Question = q
        .question
        .parse()
        .map_err(|m: String| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", m))?;
    Ok(Json(s.agreement_histogram(question)).into_response())
}

async fn export(State(s): Shared) -> Response {
    Json(s.export_benchmark()).into_response()
}

async fn instance(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let inst = s.instance(&id).ok_or_else(|| ReviewError::UnknownInstance(id.clone()))?;
    let agg = s.aggregate_for(&id)?;
    Ok(Json(json!({ "instance": inst, "aggregate": agg })).into_response())
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(store: Arc<ReviewStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/next", get(next))
        .route("/verdicts", post(submit))
        .route("/agreement", get(agreement))
        .route("/export", get(export))
        .route("/instances/{id}", get(instance))
        .fallback(api_not_found)
        .with_state(store);
    let app = Router::new().nest("/api", api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<ReviewStore>,
    ui_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store, ui_dir)).with_graceful_shutdown(shutdown).await
}
