//! HTTP front end: `POST /query`, `GET /accounts`, `GET /health`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use seedsketch::engine::{Engine, QueryRequest, RequestError, DEFAULT_PREFIX_LIMIT};

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/query", post(query))
        .route("/accounts", get(accounts))
        .route("/health", get(health))
        .with_state(engine)
}

struct ApiError(RequestError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

/// Parses a request body, naming the offending field when serde can tell.
pub fn parse_request(body: &[u8]) -> Result<QueryRequest, RequestError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = if path != "." {
            Some(path)
        } else {
            // Missing and unknown fields are reported at the root.
            message.split('`').nth(1).map(str::to_string)
        };
        RequestError::bad_request("malformed_request", message, field.as_deref())
    })
}

async fn query(State(engine): State<Arc<Engine>>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_request(&body).map_err(ApiError)?;
    let resp = tokio::task::spawn_blocking(move || engine.query(&req))
        .await
        .map_err(|e| ApiError(RequestError::internal(e.to_string())))?
        .map_err(ApiError)?;
    Ok(Json(resp).into_response())
}

#[derive(Deserialize)]
struct AccountsParams {
    #[serde(default)]
    prefix: String,
    limit: Option<usize>,
}

async fn accounts(
    State(engine): State<Arc<Engine>>,
    params: Result<Query<AccountsParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(p) = params.map_err(|e| ApiError(RequestError::bad_request("malformed_query", e.body_text(), None)))?;
    Ok(Json(engine.accounts_with_prefix(&p.prefix, p.limit.unwrap_or(DEFAULT_PREFIX_LIMIT))).into_response())
}

async fn health() -> &'static str {
    "ok"
}

pub async fn serve(engine: Arc<Engine>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
