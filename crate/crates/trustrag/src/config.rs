//! TOML configuration with environment overrides.
//!
//! Any `TRUSTRAG_A__B__C=value` variable sets key `a.b.c`; the value is read
//! as a TOML literal when it parses as one (`60`, `true`, `"x"`) and as a
//! plain string otherwise. API keys are never stored in the file: providers
//! name the variable that holds them (`api_key_env`).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use trustrag_core::chunking::ChunkStrategy;
use trustrag_core::generation::ExtractiveLlm;
use trustrag_core::pipeline::PipelineConfig;
use trustrag_core::provider::{Embedder, HashEmbedder, Llm};

use crate::http::{Endpoint, HttpEmbedder, HttpLlm};

pub const ENV_PREFIX: &str = "TRUSTRAG_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} (named by api_key_env) is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub listen: String,
    pub chunking: ChunkStrategy,
    pub pipeline: PipelineConfig,
    pub providers: ProvidersConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("trustrag-data"),
            listen: "127.0.0.1:8080".into(),
            chunking: ChunkStrategy::default(),
            pipeline: PipelineConfig::default(),
            providers: ProvidersConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub generator: LlmConfig,
    pub judge: LlmConfig,
    pub rewriter: LlmConfig,
    pub coref: LlmConfig,
    pub embedder: EmbedderConfig,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            generator: LlmConfig::Extractive,
            judge: LlmConfig::None,
            rewriter: LlmConfig::None,
            coref: LlmConfig::None,
            embedder: EmbedderConfig::Hash { dims: 256 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LlmConfig {
    None,
    /// Offline generator that answers with the context sentences.
    Extractive,
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    None,
    /// Offline feature-hashing embedder.
    Hash {
        dims: usize,
    },
    Http(HttpConfig),
}

impl Config {
    /// Reads `path` (when given and present), applies overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len()).collect();
        overrides.sort();
        for (key, value) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            set_path(&mut table, &path, literal(&value));
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, std::env::vars())
    }
}

fn literal(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if !entry.is_table() {
            *entry = toml::Value::Table(toml::Table::new());
        }
        t = entry.as_table_mut().expect("just ensured table");
    }
    t.insert(last.clone(), value);
}

fn endpoint(h: &HttpConfig, default_path: &str) -> Result<Endpoint, ConfigError> {
    let api_key = match &h.api_key_env {
        Some(var) => Some(std::env::var(var).map_err(|_| ConfigError::MissingApiKey(var.clone()))?),
        None => None,
    };
    Ok(Endpoint {
        base_url: h.base_url.clone(),
        path: h.path.clone().unwrap_or_else(|| default_path.into()),
        model: h.model.clone(),
        api_key,
        timeout: Duration::from_secs(h.timeout_secs.max(1)),
    })
}

/// Provider handles for every pipeline role.
#[derive(Clone, Default)]
pub struct ProviderSet {
    pub generator: Option<Arc<dyn Llm>>,
    pub judge: Option<Arc<dyn Llm>>,
    pub rewriter: Option<Arc<dyn Llm>>,
    pub coref: Option<Arc<dyn Llm>>,
    pub embedder: Option<Arc<dyn Embedder>>,
    http_generator: Option<Arc<HttpLlm>>,
}

impl ProviderSet {
    pub fn from_config(c: &ProvidersConfig) -> Result<Self, ConfigError> {
        let llm = |c: &LlmConfig| -> Result<Option<Arc<dyn Llm>>, ConfigError> {
            Ok(match c {
                LlmConfig::None => None,
                LlmConfig::Extractive => Some(Arc::new(ExtractiveLlm)),
                LlmConfig::Http(h) => Some(Arc::new(HttpLlm::new(endpoint(h, "/chat/completions")?))),
            })
        };
        let http_generator = match &c.generator {
            LlmConfig::Http(h) => Some(Arc::new(HttpLlm::new(endpoint(h, "/chat/completions")?))),
            _ => None,
        };
        Ok(Self {
            generator: http_generator.clone().map(|g| g as Arc<dyn Llm>).or(llm(&c.generator)?),
            judge: llm(&c.judge)?,
            rewriter: llm(&c.rewriter)?,
            coref: llm(&c.coref)?,
            embedder: match &c.embedder {
                EmbedderConfig::None => None,
                EmbedderConfig::Hash { dims } => Some(Arc::new(HashEmbedder { dims: *dims })),
                EmbedderConfig::Http(h) => Some(Arc::new(HttpEmbedder::new(endpoint(h, "/embeddings")?))),
            },
            http_generator,
        })
    }

    /// The offline default: extractive generator, hashing embedder.
    pub fn offline() -> Self {
        Self::from_config(&ProvidersConfig::default()).expect("offline providers need no environment")
    }

    /// The generator, with the model name swapped when it is an HTTP
    /// provider and `model` is given.
    pub fn generator_for(&self, model: Option<&str>) -> Option<Arc<dyn Llm>> {
        match (model, &self.http_generator) {
            (Some(m), Some(h)) if !m.is_empty() && m != h.endpoint().model => Some(Arc::new(h.with_model(m))),
            _ => self.generator.clone(),
        }
    }
}
