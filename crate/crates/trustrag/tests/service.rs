mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::*;
use serde_json::{json, Value};
use trustrag::rag::provider::mock::{MockEmbedder, MockLlm};
use trustrag::rag::provider::{Embedder, HashEmbedder, Llm};

fn messages(server: &Server, conv: &str) -> String {
    server.url(&format!("/conversations/{conv}/messages"))
}

fn offline_server(dir: &std::path::Path) -> Server {
    Server::start(Arc::new(engine(dir, mock_providers())))
}

#[test]
fn corpus_lifecycle() {
    let tmp = tempfile::tempdir().unwrap();
    let server = offline_server(tmp.path());
    assert_eq!(get(&server.url("/health")), (200, json!({"status": "ok"})));

    let id = climate_corpus(&server);
    assert_eq!(id, "corpus-0001");
    let (status, list) = get(&server.url("/corpora"));
    assert_eq!(status, 200);
    assert_eq!(list["corpora"].as_array().unwrap().len(), 1);

    let (_, corpus) = get(&server.url(&format!("/corpora/{id}")));
    assert_eq!(corpus["name"], "climate");
    assert_eq!(corpus["index_state"], "ready");
    assert_eq!(corpus["created_at"], "2025-02-20T09:00:00Z");
    let docs = corpus["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 5);
    let reefs = docs.iter().find(|d| d["title"] == "Iconic Reefs in Decline").unwrap();
    assert_eq!(reefs["publish_date"], "2025-02-18");
    assert_eq!(reefs["source_uri"], "fixtures/great_barrier_reef.json");
    assert_eq!(reefs["format"], "json");

    let (status, chunks) = get(&server.url(&format!("/corpora/{id}/chunks")));
    assert_eq!(status, 200);
    let total = chunks["total"].as_u64().unwrap();
    assert_eq!(total, corpus["index"]["chunk_count"].as_u64().unwrap());
    let first = &chunks["chunks"][0];
    assert!(first["enriched_text"].as_str().unwrap().starts_with(first["context_header"].as_str().unwrap()));
    // Relative dates are rewritten in the indexed text.
    let texts: Vec<&str> =
        chunks["chunks"].as_array().unwrap().iter().map(|c| c["enriched_text"].as_str().unwrap()).collect();
    assert!(texts.iter().any(|t| t.contains("2025-02-17, surveys found")), "{texts:#?}");
    assert!(texts.iter().any(|t| t.contains("2025-02-14, researchers confirmed")));

    assert_eq!(delete(&server.url(&format!("/corpora/{id}"))), 204);
    let (status, err) = get(&server.url(&format!("/corpora/{id}")));
    assert_eq!((status, err["code"].as_str()), (404, Some("CorpusNotFound")));
    assert_eq!(delete(&server.url(&format!("/corpora/{id}"))), 404);
}

#[test]
fn request_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let server = offline_server(tmp.path());
    let code = |r: (u16, Value)| (r.0, r.1["code"].as_str().unwrap_or_default().to_string());

    assert_eq!(code(post_json(&server.url("/corpora"), &json!({"name": " "}))), (400, "InvalidRequest".into()));
    assert_eq!(code(post_json(&server.url("/corpora"), &json!({"nom": "x"}))), (400, "InvalidRequest".into()));
    let bad_chunking = json!({"name": "x", "chunk_config": {"strategy": "fixed", "target_size": 2, "overlap": 2}});
    assert_eq!(post_json(&server.url("/corpora"), &bad_chunking).0, 400);

    let (_, corpus) = post_json(&server.url("/corpora"), &json!({"name": "empty"}));
    let id = corpus["id"].as_str().unwrap();
    let docs = server.url(&format!("/corpora/{id}/documents"));
    assert_eq!(code(post_multipart(&docs, &[("slides.pptx", b"x")], &[])), (415, "UnsupportedFormat".into()));
    assert_eq!(code(post_multipart(&docs, &[("a.txt", b"Hi there.")], &[("publish_date", "18/02/2025")])).0, 400);
    assert_eq!(code(post_multipart(&docs, &[("a.json", b"{not json")], &[])), (422, "MalformedJson".into()));
    assert_eq!(code(post_multipart(&docs, &[("a.txt", b"   ")], &[])), (422, "EmptyDocument".into()));
    assert_eq!(code(post_multipart(&docs, &[], &[("title", "x")])), (400, "InvalidRequest".into()));
    assert_eq!(code(post_multipart(&server.url("/corpora/nope/documents"), &[("a.txt", b"Hi.")], &[])).0, 404);

    // Building with no documents fails and leaves the corpus untouched.
    let (status, err) = post_json(&server.url(&format!("/corpora/{id}/index")), &Value::Null);
    assert_eq!((status, err["code"].as_str()), (400, Some("NoDocuments")));
    assert_eq!(get(&server.url(&format!("/corpora/{id}"))).1["index_state"], "empty");
    assert_eq!(code(get(&server.url(&format!("/corpora/{id}/chunks")))), (409, "CorpusNotReady".into()));

    // Conversations on an unindexed corpus cannot take messages yet.
    let conv = conversation(&server, id);
    let (status, body) = post_sse(&messages(&server, &conv), &json!({"query": QUERY}));
    assert_eq!(status, 409, "{body}");
    assert_eq!(
        code(post_json(&server.url("/conversations"), &json!({"corpus_id": "nope"}))),
        (404, "CorpusNotFound".into())
    );
    assert_eq!(
        code(post_json(&messages(&server, "conv-9999"), &json!({"query": "x"}))),
        (404, "ConversationNotFound".into())
    );
    assert_eq!(code(get(&server.url("/conversations/conv-9999"))).0, 404);
}

#[test]
fn empty_query_is_rejected_without_events() {
    let tmp = tempfile::tempdir().unwrap();
    let server = offline_server(tmp.path());
    let conv = conversation(&server, &climate_corpus(&server));
    let (status, body) = post_sse(&messages(&server, &conv), &json!({"query": "  \n "}));
    assert_eq!(status, 400);
    let body: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["code"], "EmptyQuery");
    assert_eq!(get(&server.url(&format!("/conversations/{conv}"))).1["turns"], json!([]));
}

#[test]
fn non_streaming_turns_and_history() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let seen = prompts.clone();
    let generator = MockLlm::new(move |req| {
        seen.lock().unwrap().push(req.transcript());
        Ok(fixture_answer())
    });
    let server =
        Server::start(Arc::new(engine(tmp.path(), providers(Arc::new(generator), Some(Arc::new(coral_judge()))))));
    let conv = conversation(&server, &climate_corpus(&server));

    let url = format!("{}?stream=false", messages(&server, &conv));
    let (status, answer) = post_json(&url, &json!({"query": QUERY}));
    assert_eq!(status, 200, "{answer}");
    assert!(answer["groups"].as_array().unwrap().len() >= 2);
    assert_eq!(answer["raw"], fixture_answer().as_str());

    let (_, stored) = get(&server.url(&format!("/conversations/{conv}")));
    let turn = stored["turns"][0].clone();
    assert_eq!(turn["status"], "ok");
    assert_eq!(turn["query"], QUERY);
    assert_eq!(turn["answer"], answer);
    let stages: Vec<&str> = turn["trace"].as_array().unwrap().iter().map(|e| e["stage"].as_str().unwrap()).collect();
    assert_eq!(stages.first(), Some(&"query_understanding"));
    assert_eq!(stages.last(), Some(&"citation"));
    // The stored trace keeps every delta even when the reply is not streamed.
    let deltas: String = turn["trace"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|e| e["payload"].get("delta").and_then(Value::as_str))
        .collect();
    assert_eq!(deltas, fixture_answer());

    let (status, _) = post_json(&url, &json!({"query": "What happens to bleached corals?"}));
    assert_eq!(status, 200);
    let prompts = prompts.lock().unwrap();
    assert_eq!(prompts.len(), 2);
    assert!(!prompts[0].contains("Rising Ocean Temperatures"));
    assert!(prompts[1].contains(QUERY), "history carries the first turn");

    let (_, stored) = get(&server.url(&format!("/conversations/{conv}")));
    let turns = stored["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 2);
    assert_eq!(turns[1]["query"], "What happens to bleached corals?");
}

#[test]
fn generator_failure_ends_the_stream_with_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let generator = MockLlm::fixed(fixture_answer()).with_chunk_chars(40).timing_out_after(2);
    let server =
        Server::start(Arc::new(engine(tmp.path(), providers(Arc::new(generator), Some(Arc::new(coral_judge()))))));
    let conv = conversation(&server, &climate_corpus(&server));
    let events = parse_sse(&post_sse(&messages(&server, &conv), &json!({"query": QUERY})).1);
    let deltas = events.iter().filter(|(e, v)| e == "generation" && v["payload"].get("delta").is_some()).count();
    assert_eq!(deltas, 2);
    let (last, error) = events.last().unwrap();
    assert_eq!(last, "error");
    assert_eq!(error["payload"]["code"], "ProviderTimeout");
    assert_eq!(error["payload"]["stage"], "generation");
    let sequences: Vec<u64> = events.iter().map(|(_, v)| v["sequence"].as_u64().unwrap()).collect();
    assert_eq!(sequences, (1..=events.len() as u64).collect::<Vec<_>>());

    let (_, stored) = get(&server.url(&format!("/conversations/{conv}")));
    assert_eq!(stored["turns"][0]["status"], "failed");
    assert_eq!(stored["turns"][0]["error"]["code"], "ProviderTimeout");

    let url = format!("{}?stream=false", messages(&server, &conv));
    let (status, err) = post_json(&url, &json!({"query": QUERY}));
    assert_eq!((status, err["code"].as_str()), (502, Some("ProviderTimeout")));
}

#[test]
fn missing_judge_and_sparse_search() {
    let tmp = tempfile::tempdir().unwrap();
    let embedder = Arc::new(MockEmbedder::new(|t| Ok(HashEmbedder::default().embed_one(t))));
    let mut set = providers(Arc::new(MockLlm::fixed(fixture_answer())), None);
    set.embedder = Some(embedder.clone() as Arc<dyn Embedder>);
    let server = Server::start(Arc::new(engine(tmp.path(), set)));
    let corpus = climate_corpus(&server);

    let (_, c) =
        post_json(&server.url("/conversations"), &json!({"corpus_id": corpus, "retrieval": {"search": "sparse"}}));
    assert_eq!(c["retrieval"]["search"], "sparse");
    let before = embedder.calls();
    let events = parse_sse(&post_sse(&messages(&server, c["id"].as_str().unwrap()), &json!({"query": QUERY})).1);
    assert_eq!(embedder.calls(), before, "sparse search must not embed the query");
    let utility = &events.iter().find(|(e, _)| e == "utility").unwrap().1["payload"];
    assert_eq!(utility["judger_degraded"], false);
    assert!(utility["verdicts"].as_array().unwrap().iter().all(|v| v["status"] == "unjudged"));
    assert_eq!(events.last().unwrap().0, "citation");

    let hybrid = conversation(&server, &corpus);
    parse_sse(&post_sse(&messages(&server, &hybrid), &json!({"query": QUERY})).1);
    assert!(embedder.calls() > before);
}

#[test]
fn concurrent_conversations_do_not_interleave() {
    let tmp = tempfile::tempdir().unwrap();
    let server = Arc::new(Server::start(Arc::new(engine(tmp.path(), mock_providers()))));
    let corpus = climate_corpus(&server);
    let queries =
        ["How does climate change affects corals?", "What is coral bleaching?", "Why do reefs erode?", "heat stress"];
    let handles: Vec<_> = queries
        .iter()
        .map(|q| {
            let server = server.clone();
            let conv = conversation(&server, &corpus);
            let q = q.to_string();
            std::thread::spawn(move || {
                let mut streams = Vec::new();
                for _ in 0..3 {
                    streams.push(parse_sse(&post_sse(&messages(&server, &conv), &json!({"query": q})).1));
                }
                (conv, q, streams)
            })
        })
        .collect();
    for h in handles {
        let (conv, q, streams) = h.join().unwrap();
        for events in &streams {
            assert_eq!(events[0].1["payload"]["original"], q.as_str());
            let sequences: Vec<u64> = events.iter().map(|(_, v)| v["sequence"].as_u64().unwrap()).collect();
            assert_eq!(sequences, (1..=events.len() as u64).collect::<Vec<_>>());
            assert_eq!(events.last().unwrap().0, "citation");
        }
        let (_, stored) = get(&server.url(&format!("/conversations/{conv}")));
        let turns = stored["turns"].as_array().unwrap();
        assert_eq!(turns.len(), 3);
        assert!(turns.iter().all(|t| t["query"] == q.as_str()));
    }
}

#[test]
fn concurrent_build_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let gate = Arc::new(AtomicBool::new(false));
    let open = gate.clone();
    let slow = MockEmbedder::new(move |t| {
        while !open.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(5));
        }
        Ok(HashEmbedder::default().embed_one(t))
    });
    let mut set = providers(Arc::new(MockLlm::fixed(fixture_answer())), None);
    set.embedder = Some(Arc::new(slow));
    let server = Arc::new(Server::start(Arc::new(engine(tmp.path(), set))));
    let (_, corpus) = post_json(&server.url("/corpora"), &json!({"name": "c"}));
    let id = corpus["id"].as_str().unwrap().to_string();
    let docs = server.url(&format!("/corpora/{id}/documents"));
    assert_eq!(post_multipart(&docs, &[("a.md", b"# A\n\nCorals bleach. Reefs erode.")], &[]).0, 201);

    let first = {
        let (server, id) = (server.clone(), id.clone());
        std::thread::spawn(move || post_json(&server.url(&format!("/corpora/{id}/index")), &Value::Null))
    };
    while get(&server.url(&format!("/corpora/{id}"))).1["index_state"] != "building" {
        std::thread::sleep(Duration::from_millis(5));
    }
    let (status, err) = post_json(&server.url(&format!("/corpora/{id}/index")), &Value::Null);
    assert_eq!((status, err["code"].as_str()), (409, Some("CorpusBusy")));
    assert_eq!(post_multipart(&docs, &[("b.md", b"# B\n\nMore text.")], &[]).0, 409);
    assert_eq!(delete(&server.url(&format!("/corpora/{id}"))), 409);

    gate.store(true, Ordering::SeqCst);
    let (status, built) = first.join().unwrap();
    assert_eq!(status, 200, "{built}");
    assert_eq!(built["index_state"], "ready");
}

#[test]
fn new_documents_make_the_index_stale() {
    let tmp = tempfile::tempdir().unwrap();
    let server = offline_server(tmp.path());
    let id = climate_corpus(&server);
    let conv = conversation(&server, &id);
    let docs = server.url(&format!("/corpora/{id}/documents"));
    assert_eq!(post_multipart(&docs, &[("extra.txt", b"Kelp forests\n\nKelp forests shelter fish.")], &[]).0, 201);
    assert_eq!(get(&server.url(&format!("/corpora/{id}"))).1["index_state"], "empty");
    assert_eq!(post_sse(&messages(&server, &conv), &json!({"query": "kelp"})).0, 409);
    assert_eq!(post_json(&server.url(&format!("/corpora/{id}/index")), &Value::Null).0, 200);
    let events = parse_sse(&post_sse(&messages(&server, &conv), &json!({"query": "kelp forests"})).1);
    let hits = &events.iter().find(|(e, _)| e == "retrieval").unwrap().1["payload"]["hits"];
    assert_eq!(hits[0]["title"], "Kelp forests");
}

#[test]
fn cors_is_open_for_the_studio() {
    let tmp = tempfile::tempdir().unwrap();
    let server = offline_server(tmp.path());
    let resp = ureq::get(&server.url("/health")).header("Origin", "http://localhost:5173").call().unwrap();
    assert_eq!(resp.headers().get("access-control-allow-origin").unwrap(), "*");
}

#[test]
fn llm_trait_objects_are_shareable() {
    fn assert_send_sync<T: Send + Sync + ?Sized>() {}
    assert_send_sync::<dyn Llm>();
    assert_send_sync::<trustrag::Engine>();
}
