//! Corpus lifecycle and conversation turns, shared by the HTTP service and
//! the CLI. All methods are blocking.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use trustrag_core::chunking::{Chunk, ChunkStrategy};
use trustrag_core::index::corpus_fingerprint;
use trustrag_core::ingest::{parse_document, Document, DocumentFormat, IngestError};
use trustrag_core::pipeline::{answer_question, build_corpus, BuiltCorpus, CorpusView, PipelineConfig, Providers};
use trustrag_core::provider::{ChatRequest, Llm, ProviderError};
use trustrag_core::query::HistoryTurn;

use crate::config::ProviderSet;
use crate::model::{
    ApiError, Clock, Conversation, CorpusRecord, DocumentRef, GenerationSettings, IdGen, IndexInfo, IndexState,
    RetrievalSettings, SearchMethod, SystemClock, TraceEvent, Turn, TurnStatus,
};
use crate::storage::{Storage, StorageError};
use crate::store;

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        ApiError::new(500, "StorageFailure", e.to_string())
    }
}

fn ingest_error(e: IngestError) -> ApiError {
    let code = match e {
        IngestError::UndecodableInput(_) => "UndecodableInput",
        IngestError::MalformedJson(_) => "MalformedJson",
        IngestError::EmptyDocument => "EmptyDocument",
    };
    ApiError::new(422, code, e.to_string())
}

/// A ready corpus held in memory.
pub struct LoadedCorpus {
    pub docs: BTreeMap<String, Document>,
    pub chunks: BTreeMap<String, Chunk>,
    pub built: BuiltCorpus,
}

impl LoadedCorpus {
    fn new(docs: Vec<Document>, built: BuiltCorpus) -> Self {
        Self {
            docs: docs.into_iter().map(|d| (d.id.clone(), d)).collect(),
            chunks: built.chunks.iter().map(|c| (c.id.clone(), c.clone())).collect(),
            built,
        }
    }

    fn view(&self, dense: bool) -> CorpusView<'_> {
        CorpusView {
            docs: &self.docs,
            chunks: &self.chunks,
            sparse: &self.built.sparse,
            dense: self.built.dense.as_ref().filter(|_| dense),
        }
    }
}

/// Stands in for a missing generator so the failure surfaces as a trace
/// error like any other provider outage.
struct NoGenerator;

impl Llm for NoGenerator {
    fn complete(&self, _: &ChatRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unavailable("no generator configured".into()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UploadMeta {
    pub title: Option<String>,
    pub source_uri: Option<String>,
    pub publish_date: Option<String>,
    pub author: Option<String>,
}

pub struct Engine {
    storage: Box<dyn Storage>,
    providers: ProviderSet,
    pipeline: PipelineConfig,
    default_chunking: ChunkStrategy,
    clock: Box<dyn Clock>,
    ids: IdGen,
    corpora: Mutex<BTreeMap<String, CorpusRecord>>,
    conversations: Mutex<BTreeMap<String, Arc<Mutex<Conversation>>>>,
    loaded: RwLock<BTreeMap<String, Arc<LoadedCorpus>>>,
}

pub struct EngineBuilder {
    storage: Box<dyn Storage>,
    providers: ProviderSet,
    pipeline: PipelineConfig,
    chunking: ChunkStrategy,
    clock: Box<dyn Clock>,
    ids: IdGen,
}

impl EngineBuilder {
    pub fn providers(mut self, p: ProviderSet) -> Self {
        self.providers = p;
        self
    }
    pub fn pipeline(mut self, p: PipelineConfig) -> Self {
        self.pipeline = p;
        self
    }
    pub fn chunking(mut self, c: ChunkStrategy) -> Self {
        self.chunking = c;
        self
    }
    pub fn clock(mut self, c: impl Clock + 'static) -> Self {
        self.clock = Box::new(c);
        self
    }
    pub fn ids(mut self, ids: IdGen) -> Self {
        self.ids = ids;
        self
    }

    /// Loads stored records. A build that was interrupted leaves its corpus
    /// empty with an error note.
    pub fn open(self) -> Result<Engine, ApiError> {
        let mut corpora = BTreeMap::new();
        for mut c in self.storage.load_corpora()? {
            self.ids.observe(&c.id);
            if c.index_state == IndexState::Building {
                c.index_state = IndexState::Empty;
                c.last_error = Some("index build interrupted".into());
                self.storage.save_corpus(&c)?;
            }
            corpora.insert(c.id.clone(), c);
        }
        let mut conversations = BTreeMap::new();
        for c in self.storage.load_conversations()? {
            self.ids.observe(&c.id);
            conversations.insert(c.id.clone(), Arc::new(Mutex::new(c)));
        }
        Ok(Engine {
            storage: self.storage,
            providers: self.providers,
            pipeline: self.pipeline,
            default_chunking: self.chunking,
            clock: self.clock,
            ids: self.ids,
            corpora: Mutex::new(corpora),
            conversations: Mutex::new(conversations),
            loaded: RwLock::new(BTreeMap::new()),
        })
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn validate_strategy(s: &ChunkStrategy) -> Result<(), ApiError> {
    let ok = match *s {
        ChunkStrategy::Fixed { target_size, overlap } => target_size > 0 && overlap < target_size,
        ChunkStrategy::Semantic { breakpoint_percentile } => (0.0..=100.0).contains(&breakpoint_percentile),
    };
    ok.then_some(()).ok_or_else(|| ApiError::bad_request("InvalidChunkParams", format!("invalid chunk config {s:?}")))
}

impl Engine {
    pub fn builder(storage: impl Storage + 'static) -> EngineBuilder {
        EngineBuilder {
            storage: Box::new(storage),
            providers: ProviderSet::offline(),
            pipeline: PipelineConfig::default(),
            chunking: ChunkStrategy::default(),
            clock: Box::new(SystemClock),
            ids: IdGen::Random,
        }
    }

    pub fn create_corpus(&self, name: &str, chunk_config: Option<ChunkStrategy>) -> Result<CorpusRecord, ApiError> {
        let chunk_config = chunk_config.unwrap_or(self.default_chunking);
        validate_strategy(&chunk_config)?;
        let record = CorpusRecord {
            id: self.ids.next("corpus"),
            name: name.trim().to_string(),
            chunk_config,
            index_state: IndexState::Empty,
            created_at: self.clock.now(),
            documents: Vec::new(),
            index: None,
            last_error: None,
        };
        self.storage.save_corpus(&record)?;
        lock(&self.corpora).insert(record.id.clone(), record.clone());
        Ok(record)
    }

    pub fn list_corpora(&self) -> Vec<CorpusRecord> {
        lock(&self.corpora).values().cloned().collect()
    }

    pub fn corpus(&self, id: &str) -> Result<CorpusRecord, ApiError> {
        lock(&self.corpora).get(id).cloned().ok_or_else(|| ApiError::corpus_not_found(id))
    }

    pub fn delete_corpus(&self, id: &str) -> Result<(), ApiError> {
        let mut corpora = lock(&self.corpora);
        match corpora.get(id) {
            None => return Err(ApiError::corpus_not_found(id)),
            Some(c) if c.index_state == IndexState::Building => return Err(ApiError::corpus_busy(id)),
            Some(_) => {}
        }
        self.storage.delete_corpus(id)?;
        corpora.remove(id);
        self.loaded.write().unwrap_or_else(|p| p.into_inner()).remove(id);
        Ok(())
    }

    /// Parses and stores a document. Adding to an indexed corpus makes the
    /// index stale, so the corpus returns to `empty` until rebuilt.
    pub fn add_document(
        &self,
        corpus_id: &str,
        raw: &[u8],
        format: DocumentFormat,
        meta: &UploadMeta,
    ) -> Result<DocumentRef, ApiError> {
        let mut metadata = BTreeMap::new();
        for (k, v) in [
            ("title", &meta.title),
            ("source_uri", &meta.source_uri),
            ("publish_date", &meta.publish_date),
            ("author", &meta.author),
        ] {
            if let Some(v) = v.as_ref().filter(|v| !v.trim().is_empty()) {
                metadata.insert(k.to_string(), v.trim().to_string());
            }
        }
        if let Some(d) = metadata.get("publish_date") {
            chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .map_err(|_| ApiError::bad_request("InvalidDate", format!("publish_date {d:?} is not YYYY-MM-DD")))?;
        }
        let doc = parse_document(raw, format, &metadata).map_err(ingest_error)?;

        let mut corpora = lock(&self.corpora);
        let record = corpora.get_mut(corpus_id).ok_or_else(|| ApiError::corpus_not_found(corpus_id))?;
        if record.index_state == IndexState::Building {
            return Err(ApiError::corpus_busy(corpus_id));
        }
        self.storage.save_document(corpus_id, &doc)?;
        let doc_ref = DocumentRef {
            id: doc.id.clone(),
            title: doc.title.clone(),
            source_uri: doc.source_uri.clone(),
            format,
            publish_date: doc.publish_date,
            sentences: doc.sentences.len(),
            added_at: self.clock.now(),
        };
        let mut updated = record.clone();
        updated.documents.retain(|d| d.id != doc.id);
        updated.documents.push(doc_ref.clone());
        if updated.index_state == IndexState::Ready {
            updated.index_state = IndexState::Empty;
        }
        self.storage.save_corpus(&updated)?;
        *record = updated;
        self.loaded.write().unwrap_or_else(|p| p.into_inner()).remove(corpus_id);
        Ok(doc_ref)
    }

    fn set_record(&self, record: CorpusRecord) -> Result<(), ApiError> {
        self.storage.save_corpus(&record)?;
        lock(&self.corpora).insert(record.id.clone(), record);
        Ok(())
    }

    /// Chunking, decontextualization and indexing of every stored document.
    /// Exclusive per corpus: a concurrent request gets `CorpusBusy`.
    pub fn build_index(&self, corpus_id: &str) -> Result<CorpusRecord, ApiError> {
        let mut record = {
            let mut corpora = lock(&self.corpora);
            let record = corpora.get_mut(corpus_id).ok_or_else(|| ApiError::corpus_not_found(corpus_id))?;
            if record.index_state == IndexState::Building {
                return Err(ApiError::corpus_busy(corpus_id));
            }
            if record.documents.is_empty() {
                return Err(ApiError::bad_request("NoDocuments", "corpus has no documents to index"));
            }
            record.index_state = IndexState::Building;
            record.clone()
        };
        self.storage.save_corpus(&record)?;

        let result = self.run_build(&record);
        match result {
            Ok((loaded, info)) => {
                record.index_state = IndexState::Ready;
                record.index = Some(info);
                record.last_error = None;
                self.set_record(record.clone())?;
                self.loaded.write().unwrap_or_else(|p| p.into_inner()).insert(record.id.clone(), Arc::new(loaded));
                Ok(record)
            }
            Err(e) => {
                record.index_state = IndexState::Empty;
                record.index = None;
                record.last_error = Some(e.message.clone());
                self.set_record(record)?;
                Err(e)
            }
        }
    }

    fn run_build(&self, record: &CorpusRecord) -> Result<(LoadedCorpus, IndexInfo), ApiError> {
        let docs = self.storage.load_documents(&record.id)?;
        let built = build_corpus(
            &docs,
            record.chunk_config,
            self.providers.coref.as_deref(),
            self.providers.embedder.as_deref(),
        )
        .map_err(|e| ApiError::new(502, "BuildFailed", e.to_string()))?;
        let document_set = corpus_fingerprint(docs.iter().map(|d| d.id.as_str()));
        let extra = BTreeMap::from([("document_set".to_string(), document_set.clone())]);
        store::persist(&self.storage.index_dir(&record.id), &built, extra)
            .map_err(|e| ApiError::new(500, "IndexWriteFailed", e.to_string()))?;
        let info = IndexInfo {
            document_set,
            chunk_count: built.chunks.len(),
            dense: built.dense.is_some(),
            built_at: self.clock.now(),
        };
        Ok((LoadedCorpus::new(docs, built), info))
    }

    /// The in-memory corpus, loading the persisted index on first use.
    pub fn loaded(&self, corpus_id: &str) -> Result<Arc<LoadedCorpus>, ApiError> {
        let record = self.corpus(corpus_id)?;
        if record.index_state != IndexState::Ready {
            return Err(ApiError::corpus_not_ready(corpus_id));
        }
        if let Some(l) = self.loaded.read().unwrap_or_else(|p| p.into_inner()).get(corpus_id) {
            return Ok(l.clone());
        }
        let loaded = self.load_from_disk(&record).map_err(|message| {
            let mut stale = record.clone();
            stale.index_state = IndexState::Empty;
            stale.last_error = Some(message.clone());
            let _ = self.set_record(stale);
            ApiError::new(409, "CorpusNotReady", message)
        })?;
        let loaded = Arc::new(loaded);
        self.loaded.write().unwrap_or_else(|p| p.into_inner()).insert(corpus_id.to_string(), loaded.clone());
        Ok(loaded)
    }

    fn load_from_disk(&self, record: &CorpusRecord) -> Result<LoadedCorpus, String> {
        let (built, manifest) = store::load(&self.storage.index_dir(&record.id)).map_err(|e| e.to_string())?;
        let docs = self.storage.load_documents(&record.id).map_err(|e| e.to_string())?;
        let current = corpus_fingerprint(docs.iter().map(|d| d.id.as_str()));
        if manifest.extra.get("document_set") != Some(&current) {
            return Err("stored index does not match the document set".into());
        }
        Ok(LoadedCorpus::new(docs, built))
    }

    pub fn list_chunks(&self, corpus_id: &str) -> Result<Vec<Chunk>, ApiError> {
        Ok(self.loaded(corpus_id)?.built.chunks.clone())
    }

    pub fn create_conversation(
        &self,
        corpus_id: &str,
        retrieval: RetrievalSettings,
        generation: GenerationSettings,
    ) -> Result<Conversation, ApiError> {
        self.corpus(corpus_id)?;
        let conversation = Conversation {
            id: self.ids.next("conv"),
            corpus_id: corpus_id.to_string(),
            retrieval,
            generation,
            created_at: self.clock.now(),
            turns: Vec::new(),
        };
        self.storage.save_conversation(&conversation)?;
        lock(&self.conversations).insert(conversation.id.clone(), Arc::new(Mutex::new(conversation.clone())));
        Ok(conversation)
    }

    pub fn conversation(&self, id: &str) -> Result<Conversation, ApiError> {
        let c = lock(&self.conversations).get(id).cloned().ok_or_else(|| ApiError::conversation_not_found(id))?;
        let c = lock(&c).clone();
        Ok(c)
    }

    fn pipeline_config(&self, retrieval: &RetrievalSettings) -> PipelineConfig {
        let mut config = self.pipeline.clone();
        if !retrieval.rewrite_modes.is_empty() {
            config.rewrite_modes = retrieval.rewrite_modes.clone();
        }
        if let Some(k) = retrieval.k_final.filter(|k| *k > 0) {
            config.retrieval.k_final = k;
        }
        config
    }

    fn run_turn(
        &self,
        corpus: &LoadedCorpus,
        query: &str,
        history: &[HistoryTurn],
        retrieval: &RetrievalSettings,
        generation: &GenerationSettings,
        on_event: &mut dyn FnMut(&TraceEvent),
    ) -> Turn {
        let generator = self.providers.generator_for(generation.model.as_deref());
        let hybrid = retrieval.search == SearchMethod::Hybrid;
        let providers = Providers {
            rewriter: self.providers.rewriter.as_deref(),
            judge: self.providers.judge.as_deref(),
            generator: generator.as_deref().unwrap_or(&NoGenerator),
            embedder: self.providers.embedder.as_deref().filter(|_| hybrid),
        };
        let config = self.pipeline_config(retrieval);
        let mut trace = Vec::new();
        let mut sink = |stage, payload| {
            let event = TraceEvent { stage, payload, timestamp: self.clock.now(), sequence: trace.len() as u64 + 1 };
            on_event(&event);
            trace.push(event);
        };
        let result = answer_question(query, history, corpus.view(hybrid), providers, &config, &mut sink);
        match result {
            Ok(answer) => {
                Turn { query: query.to_string(), status: TurnStatus::Ok, answer: Some(answer), error: None, trace }
            }
            Err(e) => Turn {
                query: query.to_string(),
                status: TurnStatus::Failed,
                answer: None,
                error: Some(ApiError::new(502, e.code(), e.to_string())),
                trace,
            },
        }
    }

    /// One conversation turn. Validation failures return `Err` before any
    /// event; pipeline failures end the trace with an `error` event and are
    /// recorded as a failed turn.
    pub fn handle_message(
        &self,
        conversation_id: &str,
        query: &str,
        on_event: &mut dyn FnMut(&TraceEvent),
    ) -> Result<Turn, ApiError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(ApiError::bad_request("EmptyQuery", "query is empty"));
        }
        let conversation = lock(&self.conversations)
            .get(conversation_id)
            .cloned()
            .ok_or_else(|| ApiError::conversation_not_found(conversation_id))?;
        let mut conversation = lock(&conversation);
        let corpus = self.loaded(&conversation.corpus_id)?;
        let history: Vec<HistoryTurn> = conversation
            .turns
            .iter()
            .filter_map(|t| t.answer.as_ref().map(|a| HistoryTurn { query: t.query.clone(), answer: a.raw.clone() }))
            .collect();
        let turn = self.run_turn(&corpus, query, &history, &conversation.retrieval, &conversation.generation, on_event);
        let mut updated = conversation.clone();
        updated.turns.push(turn.clone());
        self.storage.save_conversation(&updated)?;
        *conversation = updated;
        Ok(turn)
    }

    /// A single question outside any conversation.
    pub fn ask(
        &self,
        corpus_id: &str,
        query: &str,
        retrieval: &RetrievalSettings,
        on_event: &mut dyn FnMut(&TraceEvent),
    ) -> Result<Turn, ApiError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(ApiError::bad_request("EmptyQuery", "query is empty"));
        }
        let corpus = self.loaded(corpus_id)?;
        Ok(self.run_turn(&corpus, query, &[], retrieval, &GenerationSettings::default(), on_event))
    }
}

pub fn format_for(name: &str, explicit: Option<&str>) -> Result<DocumentFormat, ApiError> {
    let ext = explicit
        .map(str::to_string)
        .or_else(|| std::path::Path::new(name).extension().and_then(|e| e.to_str()).map(str::to_lowercase));
    ext.as_deref().and_then(DocumentFormat::from_extension).ok_or_else(|| {
        ApiError::new(415, "UnsupportedFormat", format!("cannot ingest {name:?}: use text, markdown, html or json"))
    })
}
