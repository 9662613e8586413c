//! JSON-over-HTTP model providers.
//!
//! Chat: `POST {base_url}{chat_path}` with `{model, messages, stream}`. The
//! reply is `{content}` or the chat-completions shape
//! (`choices[0].message.content`); streamed replies are server-sent events
//! carrying `{delta}` or `choices[0].delta.content`, ended by `[DONE]` or
//! end of stream.
//!
//! Embeddings: `POST {base_url}{embeddings_path}` with `{model, input}`,
//! answered by `{vectors}` or `data[].embedding`.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde_json::{json, Value};
use trustrag_core::provider::{ChatRequest, Embedder, Llm, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

fn map_err(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => ProviderError::Timeout,
        ureq::Error::Json(j) => ProviderError::Protocol(j.to_string()),
        other => ProviderError::Unavailable(other.to_string()),
    }
}

fn post(ep: &Endpoint, agent: &ureq::Agent, body: &Value) -> Result<ureq::http::Response<ureq::Body>, ProviderError> {
    let url = format!("{}{}", ep.base_url.trim_end_matches('/'), ep.path);
    let mut req = agent.post(&url);
    if let Some(key) = &ep.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(map_err)?;
    let status = resp.status().as_u16();
    if status >= 400 {
        let detail = resp.body_mut().read_to_string().unwrap_or_default();
        let detail: String = detail.chars().take(200).collect();
        return Err(ProviderError::Unavailable(format!("http {status}: {detail}")));
    }
    Ok(resp)
}

fn content_of(v: &Value) -> Option<&str> {
    v.get("content").and_then(Value::as_str).or_else(|| v.pointer("/choices/0/message/content").and_then(Value::as_str))
}

fn delta_of(v: &Value) -> Option<&str> {
    v.get("delta").and_then(Value::as_str).or_else(|| v.pointer("/choices/0/delta/content").and_then(Value::as_str))
}

pub struct HttpLlm {
    endpoint: Endpoint,
    agent: ureq::Agent,
}

impl HttpLlm {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { agent: agent(endpoint.timeout), endpoint }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Same endpoint with another model name.
    pub fn with_model(&self, model: &str) -> Self {
        Self::new(Endpoint { model: model.to_string(), ..self.endpoint.clone() })
    }

    fn body(&self, request: &ChatRequest, stream: bool) -> Value {
        json!({"model": self.endpoint.model, "messages": request.messages, "stream": stream})
    }
}

impl Llm for HttpLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut resp = post(&self.endpoint, &self.agent, &self.body(request, false))?;
        let v: Value = resp.body_mut().read_json().map_err(map_err)?;
        content_of(&v).map(str::to_string).ok_or_else(|| ProviderError::Protocol("reply has no content".into()))
    }

    fn complete_streaming(
        &self,
        request: &ChatRequest,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<String, ProviderError> {
        let mut resp = post(&self.endpoint, &self.agent, &self.body(request, true))?;
        let is_sse = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|ct| ct.starts_with("text/event-stream"));
        if !is_sse {
            let v: Value = resp.body_mut().read_json().map_err(map_err)?;
            let text = content_of(&v).ok_or_else(|| ProviderError::Protocol("reply has no content".into()))?;
            on_delta(text);
            return Ok(text.to_string());
        }
        let mut text = String::new();
        let reader = BufReader::new(resp.body_mut().as_reader());
        for line in reader.lines() {
            let line = line.map_err(|e| map_err(ureq::Error::Io(e)))?;
            let Some(data) = line.strip_prefix("data:") else { continue };
            let data = data.trim();
            if data == "[DONE]" {
                break;
            }
            let v: Value =
                serde_json::from_str(data).map_err(|e| ProviderError::Protocol(format!("bad event: {e}")))?;
            if let Some(d) = delta_of(&v).filter(|d| !d.is_empty()) {
                text.push_str(d);
                on_delta(d);
            }
        }
        Ok(text)
    }
}

pub struct HttpEmbedder {
    endpoint: Endpoint,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { agent: agent(endpoint.timeout), endpoint }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut resp = post(&self.endpoint, &self.agent, &json!({"model": self.endpoint.model, "input": texts}))?;
        let v: Value = resp.body_mut().read_json().map_err(map_err)?;
        let rows: Vec<&Value> = match (v.get("vectors"), v.get("data")) {
            (Some(Value::Array(rows)), _) => rows.iter().collect(),
            (_, Some(Value::Array(items))) => items.iter().filter_map(|i| i.get("embedding")).collect(),
            _ => return Err(ProviderError::Protocol("reply has no vectors".into())),
        };
        let vectors: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| serde_json::from_value(r.clone()).map_err(|e| ProviderError::Protocol(e.to_string())))
            .collect::<Result<_, _>>()?;
        if vectors.len() != texts.len() {
            return Err(ProviderError::Protocol(format!("expected {} vectors, got {}", texts.len(), vectors.len())));
        }
        if vectors.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(ProviderError::Protocol("vectors differ in length".into()));
        }
        Ok(vectors)
    }
}
