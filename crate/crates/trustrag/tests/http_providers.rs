use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use trustrag::http::{Endpoint, HttpEmbedder, HttpLlm};
use trustrag::rag::provider::{ChatRequest, Embedder, Llm, ProviderError};

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

fn sse(lines: &[&str]) -> impl IntoResponse {
    let body: String = lines.iter().map(|l| format!("data: {l}\n\n")).collect();
    ([(header::CONTENT_TYPE, "text/event-stream")], body)
}

/// A model server on an ephemeral port. Returns its base URL and the
/// requests it has received.
fn model_server() -> (String, Seen) {
    let seen: Seen = Arc::default();
    let record = |seen: &Seen, headers: &HeaderMap, body: &Value| {
        let auth = headers.get(header::AUTHORIZATION).map(|v| v.to_str().unwrap().to_string());
        seen.lock().unwrap().push((auth, body.clone()));
    };
    let app = Router::new()
        .route(
            "/content",
            post(move |State(s): State<Seen>, h: HeaderMap, Json(b): Json<Value>| async move {
                record(&s, &h, &b);
                Json(json!({"content": "plain reply"}))
            }),
        )
        .route(
            "/choices",
            post(|| async { Json(json!({"choices": [{"message": {"role": "assistant", "content": "chat reply"}}]})) }),
        )
        .route("/sse", post(|| async { sse(&[r#"{"delta":"Hel"}"#, r#"{"delta":"lo"}"#, "[DONE]", r#"{"delta":"!"}"#]) }))
        .route(
            "/sse-choices",
            post(|| async {
                sse(&[
                    r#"{"choices":[{"delta":{"role":"assistant"}}]}"#,
                    r#"{"choices":[{"delta":{"content":"Wor"}}]}"#,
                    r#"{"choices":[{"delta":{"content":"ld"}}]}"#,
                ])
            }),
        )
        .route("/sse-garbage", post(|| async { sse(&["not json"]) }))
        .route("/fail", post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }))
        .route("/empty", post(|| async { Json(json!({"other": 1})) }))
        .route(
            "/slow",
            post(|| async {
                tokio::time::sleep(Duration::from_secs(3)).await;
                Json(json!({"content": "late"}))
            }),
        )
        .route(
            "/vectors",
            post(|Json(b): Json<Value>| async move {
                let n = b["input"].as_array().unwrap().len();
                Json(json!({"vectors": (0..n).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>()}))
            }),
        )
        .route(
            "/data",
            post(|Json(b): Json<Value>| async move {
                let n = b["input"].as_array().unwrap().len();
                Json(json!({"data": (0..n).map(|i| json!({"index": i, "embedding": [1.0, i as f64]})).collect::<Vec<_>>()}))
            }),
        )
        .route("/short", post(|| async { Json(json!({"vectors": [[1.0, 2.0]]})) }))
        .route("/ragged", post(|| async { Json(json!({"vectors": [[1.0, 2.0], [1.0]]})) }))
        .with_state(seen.clone());

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}", rx.recv().unwrap()), seen)
}

fn endpoint(base: &str, path: &str) -> Endpoint {
    Endpoint {
        base_url: base.to_string(),
        path: path.to_string(),
        model: "test-model".into(),
        api_key: None,
        timeout: Duration::from_secs(5),
    }
}

fn request() -> ChatRequest {
    ChatRequest::user("hello")
}

#[test]
fn chat_reply_shapes() {
    let (base, seen) = model_server();
    let mut ep = endpoint(&base, "/content");
    ep.api_key = Some("secret".into());
    assert_eq!(HttpLlm::new(ep).complete(&request()).unwrap(), "plain reply");
    let (auth, body) = seen.lock().unwrap()[0].clone();
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["stream"], false);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");

    assert_eq!(HttpLlm::new(endpoint(&base, "/choices")).complete(&request()).unwrap(), "chat reply");
    let llm = HttpLlm::new(endpoint(&base, "/content")).with_model("other");
    llm.complete(&request()).unwrap();
    assert_eq!(seen.lock().unwrap()[1].1["model"], "other");
}

#[test]
fn streaming_reply_shapes() {
    let (base, _) = model_server();
    let stream = |path: &str| {
        let mut deltas = Vec::new();
        let text =
            HttpLlm::new(endpoint(&base, path)).complete_streaming(&request(), &mut |d| deltas.push(d.to_string()));
        text.map(|t| (t, deltas))
    };
    assert_eq!(stream("/sse").unwrap(), ("Hello".to_string(), vec!["Hel".to_string(), "lo".to_string()]));
    assert_eq!(stream("/sse-choices").unwrap(), ("World".to_string(), vec!["Wor".to_string(), "ld".to_string()]));
    // A server that ignores `stream` still works.
    assert_eq!(stream("/content").unwrap(), ("plain reply".to_string(), vec!["plain reply".to_string()]));
    assert!(matches!(stream("/sse-garbage"), Err(ProviderError::Protocol(_))));
}

#[test]
fn chat_failures_map_to_provider_errors() {
    let (base, _) = model_server();
    let err = HttpLlm::new(endpoint(&base, "/fail")).complete(&request()).unwrap_err();
    assert!(matches!(&err, ProviderError::Unavailable(m) if m.contains("500") && m.contains("boom")), "{err:?}");
    assert!(matches!(HttpLlm::new(endpoint(&base, "/empty")).complete(&request()), Err(ProviderError::Protocol(_))));

    let mut slow = endpoint(&base, "/slow");
    slow.timeout = Duration::from_millis(300);
    assert_eq!(HttpLlm::new(slow).complete(&request()), Err(ProviderError::Timeout));

    let refused = HttpLlm::new(endpoint("http://127.0.0.1:9", "/x")).complete(&request());
    assert!(matches!(refused, Err(ProviderError::Unavailable(_))));
}

#[test]
fn embedding_reply_shapes_and_checks() {
    let (base, _) = model_server();
    let embed = |path: &str| HttpEmbedder::new(endpoint(&base, path)).embed(&["a", "b", "c"]);
    assert_eq!(embed("/vectors").unwrap(), [[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]);
    assert_eq!(embed("/data").unwrap(), [[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]);
    assert!(matches!(embed("/short"), Err(ProviderError::Protocol(m)) if m.contains("expected 3")));
    assert!(matches!(embed("/ragged"), Err(ProviderError::Protocol(_))));
    assert!(matches!(embed("/empty"), Err(ProviderError::Protocol(_))));
    assert!(matches!(embed("/fail"), Err(ProviderError::Unavailable(_))));
}
