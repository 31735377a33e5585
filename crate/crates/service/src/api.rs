//! HTTP routes over [`AppState`].

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;

use attune_core::domain::ActivitySample;

use crate::app::{AppState, CreateRequest, FeedbackRequest, ServiceError, StopRequest};
use crate::session::{EventKind, ServerEvent};

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::Unprocessable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            ServiceError::Gateway(_) => (StatusCode::SERVICE_UNAVAILABLE, "gateway_unavailable"),
            ServiceError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = r.status();
        let code = if status == StatusCode::UNPROCESSABLE_ENTITY {
            "unprocessable"
        } else {
            "bad_request"
        };
        Self {
            status,
            code,
            message: r.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.code, "message": self.message})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a blocking operation (gateway calls, fsync) off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        }),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/skip", post(skip))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/samples", post(sample))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/stop", post(stop))
        .with_state(state)
}

async fn health(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    let g = app.gateway().config();
    Json(json!({
        "status": "ok",
        "provider": g.provider,
        "redaction_enabled": g.redaction_enabled,
    }))
}

async fn create(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let r = blocking(move || app.create(req)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn list(State(app): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || app.list()).await?))
}

async fn view(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || app.view(&id)).await?))
}

#[derive(Deserialize)]
struct AnswerBody {
    answer: String,
}

async fn answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(b) = body?;
    Ok(Json(blocking(move || app.answer(&id, &b.answer)).await?))
}

async fn skip(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || app.skip(&id)).await?))
}

async fn start(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || app.start(&id)).await?))
}

async fn sample(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ActivitySample>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(s) = body?;
    Ok(Json(blocking(move || app.sample(&id, s)).await?))
}

async fn feedback(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(f) = body?;
    Ok(Json(blocking(move || app.feedback(&id, f)).await?))
}

async fn stop(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<StopRequest>>,
) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(blocking(move || app.stop(&id, req)).await?))
}

#[derive(Deserialize)]
struct CursorQuery {
    cursor: Option<u64>,
}

fn to_sse(e: &ServerEvent) -> Result<Event, Infallible> {
    Ok(Event::default()
        .id(e.seq.to_string())
        .event(e.kind.name())
        .data(serde_json::to_string(e).expect("events serialize")))
}

/// Server-sent events. Replays history after `?cursor=` (or the
/// `Last-Event-ID` header), then follows live events. The stream ends after
/// the session's `stopped` event.
async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<CursorQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let header_cursor = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let cursor = q.cursor.or(header_cursor).unwrap_or(0);
    let sub = app.subscribe(&id, cursor).map_err(ApiError::from)?;
    let last = sub.history.last().map(|e| e.seq).unwrap_or(cursor);
    let history = stream::iter(sub.history);
    let live = BroadcastStream::new(sub.live)
        .filter_map(move |r| async move {
            match r {
                Ok(e) if e.seq > last => Some(e),
                Ok(_) => None,
                Err(e) => {
                    tracing::warn!(error = %e, "event subscriber lagged; reconnect with a cursor");
                    None
                }
            }
        })
        .boxed();
    let live = if sub.finished {
        stream::empty().boxed()
    } else {
        live
    };
    // Ends right after `stopped` without waiting for another live event.
    let merged = stream::unfold(
        (history.chain(live).boxed(), false),
        |(mut s, done)| async move {
            if done {
                return None;
            }
            let e = s.next().await?;
            let done = matches!(e.kind, EventKind::Stopped { .. });
            Some((e, (s, done)))
        },
    )
    .map(|e| to_sse(&e));
    Ok(Sse::new(merged).keep_alive(KeepAlive::default()))
}
