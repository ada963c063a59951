//! HTTP+JSON routes.
//!
//! Request bodies are parsed by hand so malformed JSON yields the same
//! `{code, message}` error body as every other failure.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use studybench_core::domain::SurveyForm;
use studybench_core::{PresentationId, SessionId, WorkerId};
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::service::Service;
use crate::store::BeginResponse;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BeginRequest {
    pub worker_id: WorkerId,
    pub confidence: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatingRequest {
    pub presentation_id: PresentationId,
    pub position: f64,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::WrongState { .. }
            | ServiceError::Expired
            | ServiceError::OutOfOrder { .. }
            | ServiceError::ConflictingDuplicate(_)
            | ServiceError::AlreadyComplete => StatusCode::CONFLICT,
            ServiceError::UnknownPresentation(_)
            | ServiceError::InvalidPosition(_)
            | ServiceError::IncompleteSurvey(_)
            | ServiceError::InvalidConfidence(_)
            | ServiceError::EmptyWorkerId => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::InvalidBody(_) => StatusCode::BAD_REQUEST,
            ServiceError::Assembly(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidBody(e.to_string()))
}

type AppState = Arc<Service>;

async fn begin(State(svc): State<AppState>, body: Bytes) -> Result<Response, ServiceError> {
    let req: BeginRequest = parse(&body)?;
    let resp = svc.begin_session(&req.worker_id, req.confidence)?;
    let status = match resp {
        BeginResponse::Created { .. } => StatusCode::CREATED,
        BeginResponse::Blocked { .. } => StatusCode::OK,
    };
    Ok((status, Json(resp)).into_response())
}

async fn next(
    State(svc): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.next(&SessionId::new(id))?).into_response())
}

async fn session(
    State(svc): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.session(&SessionId::new(id))?).into_response())
}

async fn rating(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let req: RatingRequest = parse(&body)?;
    let ack = svc.submit_rating(&SessionId::new(id), req.presentation_id, req.position)?;
    Ok(Json(ack).into_response())
}

async fn survey(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let form: SurveyForm = parse(&body)?;
    Ok(Json(svc.submit_survey(&SessionId::new(id), &form)?).into_response())
}

async fn healthz(State(svc): State<AppState>) -> Response {
    Json(serde_json::json!({
        "status": "ok",
        "sessions": svc.session_count(),
    }))
    .into_response()
}

async fn export(State(svc): State<AppState>) -> Result<Response, ServiceError> {
    Ok(Json(svc.export()?).into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(begin))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/ratings", post(rating))
        .route("/sessions/{id}/survey", post(survey))
        .route("/healthz", get(healthz))
        .route("/export", get(export))
        .with_state(service)
}

pub async fn serve(listener: TcpListener, service: Arc<Service>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

/// Binds an ephemeral local port and serves in the background.
pub async fn spawn_local(
    service: Arc<Service>,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, service));
    Ok((addr, handle))
}
