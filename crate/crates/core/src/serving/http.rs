//! `GET /recommend`, `POST /event` and `GET /health` over HTTP/1.1.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

use super::{format_response, RecRequest, Recommender, ServeError};
use crate::event_log::WatchEvent;

pub fn router(recommender: Arc<Recommender>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/recommend", get(recommend))
        .route("/event", post(event))
        .with_state(recommender)
}

async fn health() -> &'static str {
    "ok\n"
}

fn error_response(err: ServeError) -> Response {
    let status = match &err {
        ServeError::InvalidRequest(_) | ServeError::Ingest(_) => StatusCode::BAD_REQUEST,
        ServeError::Assignment(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, format!("error: {err}\n")).into_response()
}

fn required<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<T, ServeError> {
    let raw = params
        .get(key)
        .ok_or_else(|| ServeError::InvalidRequest(format!("missing query parameter `{key}`")))?;
    raw.parse()
        .map_err(|_| ServeError::InvalidRequest(format!("bad value for `{key}`: `{raw}`")))
}

async fn recommend(State(rec): State<Arc<Recommender>>, Query(params): Query<HashMap<String, String>>) -> Response {
    let request = (|| {
        Ok::<_, ServeError>(RecRequest {
            user_id: required(&params, "user")?,
            now: required(&params, "now")?,
            requested_count: required(&params, "count")?,
        })
    })();
    let result = match request {
        Ok(req) => tokio::task::spawn_blocking(move || rec.recommend(&req))
            .await
            .unwrap_or_else(|e| Err(ServeError::Artifacts(format!("request task failed: {e}")))),
        Err(e) => Err(e),
    };
    match result {
        Ok(imp) => format_response(&imp.list, imp.arm).into_response(),
        Err(e) => error_response(e),
    }
}

/// Body is one event-log line.
async fn event(State(rec): State<Arc<Recommender>>, body: Bytes) -> Response {
    let parsed = std::str::from_utf8(&body)
        .map_err(|_| ServeError::InvalidRequest("body is not UTF-8".into()))
        .and_then(|text| WatchEvent::parse_line(text.trim()).map_err(ServeError::InvalidRequest));
    match parsed.and_then(|e| rec.ingest(&e)) {
        Ok(seq) => format!("ok seq={seq}\n").into_response(),
        Err(e) => error_response(e),
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, recommender: Arc<Recommender>) -> std::io::Result<()> {
    axum::serve(listener, router(recommender)).await
}

/// Binds `addr` and blocks the calling thread serving requests.
pub fn run_blocking(addr: SocketAddr, recommender: Arc<Recommender>) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = TcpListener::bind(addr).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve(listener, recommender).await
    })
}
