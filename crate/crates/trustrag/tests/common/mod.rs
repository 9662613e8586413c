#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{TimeZone, Utc};
use serde_json::Value;
use trustrag::config::ProviderSet;
use trustrag::model::{FixedClock, IdGen};
use trustrag::rag::chunking::ChunkStrategy;
use trustrag::rag::generation::ExtractiveLlm;
use trustrag::rag::prompts::USEFULNESS_MARKER;
use trustrag::rag::provider::mock::MockLlm;
use trustrag::rag::provider::{Embedder, HashEmbedder, Llm};
use trustrag::{Engine, FileStorage};

/// The usage scenario question.
pub const QUERY: &str = "How does climate change affects corals?";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// `(file name, bytes, publish_date)` for every climate fixture document.
pub fn climate_files() -> Vec<(String, Vec<u8>, Option<&'static str>)> {
    let dates = [("ocean_warming.md", "2025-02-18"), ("heat_stress.html", "2025-02-11")];
    let mut names: Vec<String> = std::fs::read_dir(fixtures().join("climate"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let bytes = std::fs::read(fixtures().join("climate").join(&n)).unwrap();
            let date = dates.iter().find(|d| d.0 == n).map(|d| d.1);
            (n, bytes, date)
        })
        .collect()
}

pub fn fixture_answer() -> String {
    std::fs::read_to_string(fixtures().join("answer.md")).unwrap()
}

/// Judges a passage useful when it mentions corals or reefs.
pub fn coral_judge() -> MockLlm {
    MockLlm::new(|req| {
        let t = req.transcript();
        assert!(t.contains(USEFULNESS_MARKER), "judge got a foreign prompt");
        let passage = t.split_once("\nPassage (").map(|p| p.1).unwrap_or_default().to_lowercase();
        let useful = passage.contains("coral") || passage.contains("reef");
        let why = if useful { "mentions corals" } else { "off topic" };
        Ok(format!(r#"{{"useful": {useful}, "rationale": "{why}"}}"#))
    })
}

pub fn providers(generator: Arc<dyn Llm>, judge: Option<Arc<dyn Llm>>) -> ProviderSet {
    let mut set = ProviderSet::default();
    set.generator = Some(generator);
    set.judge = judge;
    set.embedder = Some(Arc::new(HashEmbedder::default()) as Arc<dyn Embedder>);
    set
}

pub fn mock_providers() -> ProviderSet {
    providers(Arc::new(MockLlm::fixed(fixture_answer()).with_chunk_chars(24)), Some(Arc::new(coral_judge())))
}

pub fn extractive_providers() -> ProviderSet {
    providers(Arc::new(ExtractiveLlm), Some(Arc::new(coral_judge())))
}

pub fn engine(dir: &Path, providers: ProviderSet) -> Engine {
    Engine::builder(FileStorage::new(dir))
        .providers(providers)
        .chunking(ChunkStrategy::Fixed { target_size: 2, overlap: 0 })
        .clock(FixedClock(Utc.with_ymd_and_hms(2025, 2, 20, 9, 0, 0).unwrap()))
        .ids(IdGen::sequential())
        .open()
        .unwrap()
}

/// A service on an ephemeral port, stopped on drop.
pub struct Server {
    pub base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(engine: Arc<Engine>) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, trustrag::server::router(engine))
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self { base: format!("http://{addr}"), stop: Some(stop), thread: Some(thread) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn finish(mut resp: ureq::http::Response<ureq::Body>) -> (u16, String) {
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

fn json_of(body: &str) -> Value {
    if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(body).unwrap_or_else(|e| panic!("not json ({e}): {body}"))
    }
}

pub fn get(url: &str) -> (u16, Value) {
    let (s, b) = finish(agent().get(url).call().unwrap());
    (s, json_of(&b))
}

pub fn delete(url: &str) -> u16 {
    agent().delete(url).call().unwrap().status().as_u16()
}

pub fn post_json(url: &str, body: &Value) -> (u16, Value) {
    let (s, b) = finish(agent().post(url).send_json(body).unwrap());
    (s, json_of(&b))
}

/// Raw response body of a streaming message request.
pub fn post_sse(url: &str, body: &Value) -> (u16, String) {
    finish(agent().post(url).send_json(body).unwrap())
}

pub fn post_multipart(url: &str, files: &[(&str, &[u8])], fields: &[(&str, &str)]) -> (u16, Value) {
    const BOUNDARY: &str = "----trustrag-test-boundary";
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
    }
    for (filename, bytes) in files {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\n\
                 Content-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    let resp = agent()
        .post(url)
        .header("Content-Type", &format!("multipart/form-data; boundary={BOUNDARY}"))
        .send(&body[..])
        .unwrap();
    let (s, b) = finish(resp);
    (s, json_of(&b))
}

/// `(event name, data)` for each event of an SSE body.
pub fn parse_sse(raw: &str) -> Vec<(String, Value)> {
    raw.split("\n\n")
        .filter(|block| !block.trim().is_empty())
        .map(|block| {
            let mut event = String::new();
            let mut data = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.strip_prefix(' ').unwrap_or(v));
                }
            }
            (event, serde_json::from_str(&data).unwrap())
        })
        .collect()
}

/// Creates the climate corpus over HTTP, uploads every fixture and builds
/// the index. Returns the corpus id.
pub fn climate_corpus(server: &Server) -> String {
    let (status, corpus) = post_json(&server.url("/corpora"), &serde_json::json!({"name": "climate"}));
    assert_eq!(status, 201, "{corpus}");
    let id = corpus["id"].as_str().unwrap().to_string();
    for (name, bytes, date) in climate_files() {
        let mut fields = vec![("source_uri", format!("fixtures/{name}"))];
        if let Some(d) = date {
            fields.push(("publish_date", d.to_string()));
        }
        let fields: Vec<(&str, &str)> = fields.iter().map(|(k, v)| (*k, v.as_str())).collect();
        let url = server.url(&format!("/corpora/{id}/documents"));
        let (status, body) = post_multipart(&url, &[(&name, &bytes)], &fields);
        assert_eq!(status, 201, "{body}");
    }
    let (status, built) = post_json(&server.url(&format!("/corpora/{id}/index")), &Value::Null);
    assert_eq!(status, 200, "{built}");
    assert_eq!(built["index_state"], "ready");
    id
}

pub fn conversation(server: &Server, corpus: &str) -> String {
    let (status, c) = post_json(&server.url("/conversations"), &serde_json::json!({"corpus_id": corpus}));
    assert_eq!(status, 201, "{c}");
    c["id"].as_str().unwrap().to_string()
}

/// Runs the usage scenario end to end over HTTP with the scripted
/// generator. Returns the raw SSE body.
pub fn scenario_stream() -> String {
    let tmp = tempfile::tempdir().unwrap();
    let server = Server::start(Arc::new(engine(tmp.path(), mock_providers())));
    let corpus = climate_corpus(&server);
    let conv = conversation(&server, &corpus);
    let (status, raw) =
        post_sse(&server.url(&format!("/conversations/{conv}/messages")), &serde_json::json!({"query": QUERY}));
    assert_eq!(status, 200, "{raw}");
    raw
}

/// Compares `actual` with the stored golden file, rewriting it instead
/// when `UPDATE_GOLDEN` is set. Returns whether they match.
pub fn golden(name: &str, actual: &str) -> bool {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return true;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    expected == actual
}

/// The annotated answer carried by the `citation` event, pretty printed.
pub fn answer_json(events: &[(String, Value)]) -> String {
    let (_, citation) = events.iter().find(|(e, _)| e == "citation").expect("citation event");
    serde_json::to_string_pretty(&citation["payload"]).unwrap() + "\n"
}

/// Answer sentences that carry content but received no citation.
pub fn uncited_content(answer: &Value) -> Vec<String> {
    let mut sentences: Vec<&Value> = answer["summary"].as_array().unwrap().iter().collect();
    for s in answer["sections"].as_array().unwrap() {
        sentences.extend(s["sentences"].as_array().unwrap());
    }
    sentences
        .into_iter()
        .filter(|s| s["citations"].as_array().unwrap().is_empty())
        .map(|s| s["text"].as_str().unwrap().to_string())
        .collect()
}
