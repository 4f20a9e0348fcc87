//! HTTP+JSON routes over an [`Engine`].

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::engine::{AckStatus, ApiError, BoardView, Engine};

pub const TOKEN_HEADER: &str = "x-worker-token";

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type Shared = Arc<Engine>;

fn authorize(engine: &Engine, headers: &HeaderMap) -> Result<(), ApiError> {
    match &engine.config().worker_token {
        None => Ok(()),
        Some(expected) => {
            let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
            if given == Some(expected.as_str()) {
                Ok(())
            } else {
                Err(ApiError::new(
                    401,
                    "invalid-token",
                    format!("missing or wrong {TOKEN_HEADER} header"),
                ))
            }
        }
    }
}

async fn submit(
    State(engine): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    authorize(&engine, &headers)?;
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(400, "malformed-json", e.to_string()))?;
    let ack = engine.submit(&value)?;
    let status = match ack.status {
        AckStatus::Accepted => StatusCode::CREATED,
        AckStatus::Duplicate => StatusCode::OK,
    };
    Ok((status, Json(ack)).into_response())
}

async fn next_pair(
    State(engine): State<Shared>,
    headers: HeaderMap,
    Path(task): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    authorize(&engine, &headers)?;
    let worker = query.get("worker").map(String::as_str).unwrap_or_default();
    match engine.next_pair(&task, worker, Instant::now())? {
        Some(view) => Ok(Json(view).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn leaderboard(
    State(engine): State<Shared>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    authorize(&engine, &headers)?;
    let view: BoardView = query
        .get("view")
        .map(String::as_str)
        .unwrap_or("normalized")
        .parse()?;
    Ok(Json(engine.leaderboard(view)?).into_response())
}

async fn stats(State(engine): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    authorize(&engine, &headers)?;
    Ok(Json(engine.stats()).into_response())
}

async fn health(State(engine): State<Shared>) -> Json<Value> {
    Json(json!({ "status": "ok", "offset": engine.offset() }))
}

async fn not_found() -> ApiError {
    ApiError::new(404, "not-found", "no such route")
}

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/v1/judgments", post(submit))
        .route("/v1/tasks/{task}/next-pair", get(next_pair))
        .route("/v1/leaderboard", get(leaderboard))
        .route("/v1/stats", get(stats))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .with_state(engine)
}

/// Serves until `shutdown` resolves. `on_bound` receives the bound address.
pub async fn serve(
    engine: Shared,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await
}
