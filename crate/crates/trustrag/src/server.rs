//! HTTP API. Bodies are JSON, errors are `{code, message}`; message turns
//! stream their trace as server-sent events (one `TraceEvent` per event,
//! event name = stage); with `?stream=false` the reply is the terminal
//! payload only.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;
use trustrag_core::chunking::ChunkStrategy;
use trustrag_core::pipeline::Stage;

use crate::engine::{format_for, Engine, UploadMeta};
use crate::model::{ApiError, GenerationSettings, RetrievalSettings, TraceEvent};

const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))
}

/// Runs blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/corpora", get(list_corpora).post(create_corpus))
        .route("/corpora/{id}", get(get_corpus).delete(delete_corpus))
        .route("/corpora/{id}/documents", post(upload_documents))
        .route("/corpora/{id}/index", post(build_index))
        .route("/corpora/{id}/chunks", get(list_chunks))
        .route("/conversations", post(create_conversation))
        .route("/conversations/{id}", get(get_conversation))
        .route("/conversations/{id}/messages", post(post_message))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(engine)
}

type Shared = State<Arc<Engine>>;

async fn list_corpora(State(engine): Shared) -> impl IntoResponse {
    Json(json!({"corpora": engine.list_corpora()}))
}

#[derive(Deserialize)]
struct CreateCorpus {
    name: String,
    #[serde(default)]
    chunk_config: Option<ChunkStrategy>,
}

async fn create_corpus(State(engine): Shared, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateCorpus = parse(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::bad_request("InvalidRequest", "name is required"));
    }
    let record = blocking(move || engine.create_corpus(&req.name, req.chunk_config)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_corpus(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.corpus(&id)?))
}

async fn delete_corpus(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    blocking(move || engine.delete_corpus(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    ApiError::bad_request("InvalidRequest", e.body_text())
}

/// Multipart fields: one or more `file` parts, plus optional text fields
/// `format`, `title`, `source_uri`, `publish_date`, `author` that apply to
/// every file in the request.
async fn upload_documents(
    State(engine): Shared,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> ApiResult<impl IntoResponse> {
    let mut files = Vec::new();
    let mut meta = UploadMeta::default();
    let mut format = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            let filename = field.file_name().unwrap_or("upload.txt").to_string();
            let bytes = field.bytes().await.map_err(multipart_error)?;
            files.push((filename, bytes));
            continue;
        }
        let value = field.text().await.map_err(multipart_error)?;
        match name.as_str() {
            "format" => format = Some(value),
            "title" => meta.title = Some(value),
            "source_uri" => meta.source_uri = Some(value),
            "publish_date" => meta.publish_date = Some(value),
            "author" => meta.author = Some(value),
            _ => {}
        }
    }
    if files.is_empty() {
        return Err(ApiError::bad_request("InvalidRequest", "no file part"));
    }
    let docs = blocking(move || {
        engine.corpus(&id)?;
        let mut out = Vec::new();
        for (filename, bytes) in files {
            let fmt = format_for(&filename, format.as_deref())?;
            let mut meta = meta.clone();
            meta.source_uri.get_or_insert_with(|| filename.clone());
            out.push(engine.add_document(&id, &bytes, fmt, &meta)?);
        }
        Ok(out)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({"documents": docs}))))
}

async fn build_index(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || engine.build_index(&id)).await?))
}

async fn list_chunks(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let chunks = blocking({
        let id = id.clone();
        move || engine.list_chunks(&id)
    })
    .await?;
    Ok(Json(json!({"corpus_id": id, "total": chunks.len(), "chunks": chunks})))
}

#[derive(Deserialize)]
struct CreateConversation {
    corpus_id: String,
    #[serde(default)]
    retrieval: RetrievalSettings,
    #[serde(default)]
    generation: GenerationSettings,
}

async fn create_conversation(State(engine): Shared, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateConversation = parse(&body)?;
    let c = blocking(move || engine.create_conversation(&req.corpus_id, req.retrieval, req.generation)).await?;
    Ok((StatusCode::CREATED, Json(c)))
}

async fn get_conversation(State(engine): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(engine.conversation(&id)?))
}

#[derive(Deserialize)]
struct PostMessage {
    query: String,
}

#[derive(Deserialize)]
struct MessageParams {
    #[serde(default = "yes")]
    stream: bool,
}

fn yes() -> bool {
    true
}

pub fn sse_event(e: &TraceEvent) -> Event {
    Event::default()
        .event(e.stage.as_str())
        .id(e.sequence.to_string())
        .data(serde_json::to_string(e).expect("trace events serialize"))
}

async fn post_message(
    State(engine): Shared,
    Path(id): Path<String>,
    Query(params): Query<MessageParams>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: PostMessage = parse(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("EmptyQuery", "query is empty"));
    }
    // Reject before any event is produced when the turn cannot start.
    let corpus_id = engine.conversation(&id)?.corpus_id;
    blocking({
        let engine = engine.clone();
        move || engine.loaded(&corpus_id).map(drop)
    })
    .await?;

    if !params.stream {
        // Only the terminal payload: the annotated answer, or the error.
        let turn = blocking(move || engine.handle_message(&id, &req.query, &mut |_| {})).await?;
        return match (turn.answer, turn.error) {
            (Some(answer), _) => Ok(Json(answer).into_response()),
            (None, error) => Err(error.unwrap_or_else(|| ApiError::internal("turn failed"))),
        };
    }

    let (tx, rx) = mpsc::unbounded_channel::<TraceEvent>();
    tokio::task::spawn_blocking(move || {
        let result = engine.handle_message(&id, &req.query, &mut |e| {
            let _ = tx.send(e.clone());
        });
        if let Err(e) = result {
            let _ = tx.send(TraceEvent {
                stage: Stage::Error,
                payload: json!({"code": e.code, "message": e.message}),
                timestamp: chrono::Utc::now(),
                sequence: 1,
            });
        }
    });
    Ok(Sse::new(event_stream(rx)).into_response())
}

fn event_stream(rx: mpsc::UnboundedReceiver<TraceEvent>) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (Ok(sse_event(&e)), rx)) })
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
