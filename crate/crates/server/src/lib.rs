//! HTTP front end for [`StudyService`].
//!
//! Every error body is `{"error": code, "message": text}`, plus
//! `remaining_ms` when a gate is still closed.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use trustlab::service::{export_jsonl, Clock, ServiceError, StudyConfig, StudyService, DATA_DIR_ENV};

type Svc = Arc<StudyService>;

pub enum ApiError {
    Service(ServiceError),
    /// Request body that is not the expected JSON.
    BadRequest(StatusCode, String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self::Service(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::BadRequest(e.status(), e.body_text())
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
        ServiceError::AlreadyEnrolled(_) | ServiceError::NotFinished(_) => StatusCode::CONFLICT,
        ServiceError::Protocol(p) if p.is_protocol() => StatusCode::CONFLICT,
        ServiceError::Protocol(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = match self {
            ApiError::Service(e) => e,
            ApiError::BadRequest(status, message) => return (status, Json(json!({"error": "bad_request", "message": message}))).into_response(),
        };
        let status = status_of(&e);
        if status.is_server_error() {
            log::error!("{e}");
        }
        let mut body = json!({"error": e.code(), "message": e.to_string()});
        if let Some(ms) = e.remaining_ms() {
            body["remaining_ms"] = json!(ms);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: serde::Serialize>(v: T) -> ApiResult {
    Ok(Json(v).into_response())
}

#[derive(Deserialize)]
struct NewSession {
    user_id: String,
}

#[derive(Deserialize)]
struct Decision {
    decision: usize,
}

#[derive(Deserialize)]
struct Trust {
    trust: i64,
}

#[derive(Deserialize)]
struct ClientEvent {
    name: String,
    #[serde(default)]
    detail: Value,
}

async fn create_session(State(svc): State<Svc>, req: Result<Json<NewSession>, JsonRejection>) -> ApiResult {
    let Json(req) = req?;
    let e = svc.create_session(&req.user_id)?;
    Ok((StatusCode::CREATED, Json(e)).into_response())
}

async fn problem(State(svc): State<Svc>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok(svc.get_problem(&id)?)
}

async fn advice(State(svc): State<Svc>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok(svc.get_advice(&id)?)
}

async fn progress(State(svc): State<Svc>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok(svc.get_progress(&id)?)
}

async fn initial(State(svc): State<Svc>, UrlPath(id): UrlPath<String>, d: Result<Json<Decision>, JsonRejection>) -> ApiResult {
    ok(svc.post_initial(&id, d?.0.decision)?)
}

async fn final_(State(svc): State<Svc>, UrlPath(id): UrlPath<String>, d: Result<Json<Decision>, JsonRejection>) -> ApiResult {
    ok(svc.post_final(&id, d?.0.decision)?)
}

async fn trust(State(svc): State<Svc>, UrlPath(id): UrlPath<String>, t: Result<Json<Trust>, JsonRejection>) -> ApiResult {
    ok(svc.post_trust(&id, t?.0.trust)?)
}

async fn event(State(svc): State<Svc>, UrlPath(id): UrlPath<String>, ev: Result<Json<ClientEvent>, JsonRejection>) -> ApiResult {
    let Json(ev) = ev?;
    svc.post_client_event(&id, &ev.name, ev.detail)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn finalize(State(svc): State<Svc>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok(svc.finalize_session(&id)?)
}

async fn export(State(svc): State<Svc>) -> Response {
    let body = export_jsonl(&svc.export());
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from(body)).into_response()
}

async fn study(State(svc): State<Svc>) -> ApiResult {
    let cfg = svc.config();
    ok(json!({
        "study_id": cfg.study_id,
        "task": cfg.task,
        "target_per_condition": cfg.target_per_condition,
        "conditions": svc.condition_counts(),
    }))
}

pub fn router(svc: Svc) -> Router {
    Router::new()
        .route("/study", get(study))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/problem", get(problem))
        .route("/sessions/{id}/advice", get(advice))
        .route("/sessions/{id}/progress", get(progress))
        .route("/sessions/{id}/initial", post(initial))
        .route("/sessions/{id}/final", post(final_))
        .route("/sessions/{id}/trust", post(trust))
        .route("/sessions/{id}/events", post(event))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/export", get(export))
        .with_state(svc)
}

/// Opens the service, persisting under `$TRUSTLAB_DATA_DIR` when it is set.
pub fn open_service(config: StudyConfig, base: &Path, clock: Arc<dyn Clock>) -> Result<StudyService, ServiceError> {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => StudyService::open(config, base, Path::new(&dir), clock),
        None => {
            log::warn!("{DATA_DIR_ENV} not set; sessions are kept in memory only");
            StudyService::in_memory(config, base, clock)
        }
    }
}

/// Serves on `listener` until ctrl-c, then writes a final snapshot.
pub async fn serve(svc: Svc, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::clone(&svc)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Err(e) = svc.snapshot() {
        log::warn!("final snapshot failed: {e}");
    }
    Ok(())
}
