//! JSON-over-HTTP front-end for the elicitation service.

use std::collections::BTreeMap;
use std::sync::Arc;

use affinity_core::service::SessionView;
use affinity_core::{ElicitationService, Error};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

type Shared = Arc<ElicitationService>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::UnknownSession(_) | Error::UnknownCandidate(_) => StatusCode::NOT_FOUND,
        Error::DuplicateActiveSession(_) | Error::SessionNotActive(_) => StatusCode::CONFLICT,
        Error::LexiconUnavailable => StatusCode::SERVICE_UNAVAILABLE,
        Error::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(ErrorBody { code: self.0.code().into(), message: self.0.to_string() })).into_response()
    }
}

/// Runs a blocking service call off the async executor.
async fn call<T, F>(svc: &Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ElicitationService) -> affinity_core::Result<T> + Send + 'static,
{
    let svc = svc.clone();
    match tokio::task::spawn_blocking(move || f(&svc)).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(Error::Storage(std::io::Error::other(e.to_string())))),
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub candidate_id: String,
}

#[derive(Debug, Deserialize)]
pub struct SubmitRatings {
    pub ratings: BTreeMap<String, i64>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct RecommendationQuery {
    pub context: Option<String>,
}

async fn create_session(State(svc): State<Shared>, Json(body): Json<CreateSession>) -> Result<Response, ApiError> {
    let set = call(&svc, move |s| s.create_session(&body.candidate_id)).await?;
    Ok((StatusCode::CREATED, Json(set)).into_response())
}

async fn submit_ratings(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<SubmitRatings>,
) -> Result<Response, ApiError> {
    let key = body
        .idempotency_key
        .or_else(|| headers.get("idempotency-key").and_then(|v| v.to_str().ok()).map(str::to_string));
    let outcome = call(&svc, move |s| s.submit_ratings(&id, &body.ratings, key.as_deref())).await?;
    Ok(Json(outcome).into_response())
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(call(&svc, move |s| s.get_session(&id)).await?))
}

async fn get_profile(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(call(&svc, move |s| s.get_profile(&id)).await?).into_response())
}

async fn get_recommendations(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<RecommendationQuery>,
) -> Result<Response, ApiError> {
    let candidate_id = id.clone();
    let items = call(&svc, move |s| s.get_recommendations(&id, q.context.as_deref(), None)).await?;
    Ok(Json(serde_json::json!({ "candidate_id": candidate_id, "items": items })).into_response())
}

async fn healthz(State(svc): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "catalog_items": svc.catalog().len() }))
}

pub fn router(service: Arc<ElicitationService>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/ratings", post(submit_ratings))
        .route("/v1/candidates/{id}/profile", get(get_profile))
        .route("/v1/candidates/{id}/recommendations", get(get_recommendations))
        .route("/v1/healthz", get(healthz))
        .layer(CorsLayer::permissive())
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<ElicitationService>) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
