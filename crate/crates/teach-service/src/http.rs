use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::api::*;
use crate::service::{ServiceError, TeachService};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        error(status, self.to_string())
    }
}

fn error(status: StatusCode, msg: String) -> Response {
    (status, Json(ApiError { v: API_VERSION, error: msg })).into_response()
}

type Shared = Arc<TeachService>;
type Reply<T> = Result<Json<T>, Response>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, Response> {
    payload.map(|Json(t)| t).map_err(|e| error(StatusCode::BAD_REQUEST, e.body_text()))
}

async fn create_session(State(s): State<Shared>, payload: Result<Json<CreateSession>, JsonRejection>) -> Reply<SessionCreated> {
    let req = body(payload)?;
    tokio::task::spawn_blocking(move || s.create_session(req))
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
        .map_err(IntoResponse::into_response)
}

async fn next_item(State(s): State<Shared>, Path(id): Path<String>) -> Reply<NextItem> {
    s.next_item(&id).map(Json).map_err(IntoResponse::into_response)
}

async fn submit_feedback(
    State(s): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<FeedbackSubmission>, JsonRejection>,
) -> Reply<FeedbackAck> {
    let sub = body(payload)?;
    tokio::task::spawn_blocking(move || s.submit_feedback(&id, sub))
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
        .map_err(IntoResponse::into_response)
}

async fn train(State(s): State<Shared>, payload: Result<Json<TrainRequest>, JsonRejection>) -> Reply<TrainResult> {
    let req = body(payload)?;
    tokio::task::spawn_blocking(move || s.train_now(req))
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
        .map_err(IntoResponse::into_response)
}

async fn metrics(State(s): State<Shared>, Path(id): Path<String>) -> Reply<SessionMetrics> {
    tokio::task::spawn_blocking(move || s.metrics(&id))
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
        .map_err(IntoResponse::into_response)
}

async fn healthz(State(s): State<Shared>) -> Json<Health> {
    Json(s.health())
}

async fn require_token(State(s): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.config().token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|h| h.to_str().ok())
            .and_then(|h| h.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return error(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into());
        }
    }
    next.run(req).await
}

/// All routes. `/healthz` is open; the rest require the bearer token when
/// one is configured.
pub fn router(service: Arc<TeachService>) -> Router {
    let protected = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/train", post(train))
        .route_layer(middleware::from_fn_with_state(service.clone(), require_token));
    Router::new().route("/healthz", get(healthz)).merge(protected).with_state(service)
}

/// Serve on `addr` until ctrl-c.
pub async fn serve(service: Arc<TeachService>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
