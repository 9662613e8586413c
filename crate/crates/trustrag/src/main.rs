use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trustrag::engine::{format_for, UploadMeta};
use trustrag::model::{RetrievalSettings, SearchMethod, TurnStatus};
use trustrag::rag::chunking::ChunkStrategy;
use trustrag::rag::ingest::parse_document;
use trustrag::rag::pipeline::build_corpus;
use trustrag::{store, ApiError, Config, Engine, FileStorage, ProviderSet};

#[derive(Parser)]
#[command(name = "trustrag", version, about = "Attribution-first retrieval-augmented question answering")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "TRUSTRAG_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the config.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manage corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Ask a question against a ready corpus.
    Ask {
        #[arg(long)]
        corpus: String,
        query: String,
        /// Print the annotated answer as JSON.
        #[arg(long)]
        json: bool,
        /// Print every trace event to stderr.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value_t = Search::Hybrid)]
        search: Search,
    },
    /// Build or inspect standalone index directories.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Run the HTTP service.
    Serve {
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Create {
        name: String,
        #[command(flatten)]
        chunking: ChunkArgs,
    },
    Add {
        corpus: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        meta: MetaArgs,
    },
    Build {
        corpus: String,
    },
    List,
    /// Print the chunks of a ready corpus as JSON lines.
    Chunks {
        corpus: String,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chunking: ChunkArgs,
        #[command(flatten)]
        meta: MetaArgs,
    },
    Inspect {
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Fixed,
    Semantic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Search {
    Hybrid,
    Sparse,
}

#[derive(Args)]
struct ChunkArgs {
    /// Chunking strategy; the config default when omitted.
    #[arg(long, value_enum)]
    chunking: Option<Strategy>,
    /// Sentences per fixed chunk.
    #[arg(long, default_value_t = 4)]
    size: usize,
    /// Sentences shared by consecutive fixed chunks.
    #[arg(long, default_value_t = 0)]
    overlap: usize,
    /// Breakpoint percentile for semantic chunking.
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
}

impl ChunkArgs {
    fn strategy(&self) -> Option<ChunkStrategy> {
        self.chunking.map(|s| match s {
            Strategy::Fixed => ChunkStrategy::Fixed { target_size: self.size, overlap: self.overlap },
            Strategy::Semantic => ChunkStrategy::Semantic { breakpoint_percentile: self.percentile },
        })
    }
}

#[derive(Args)]
struct MetaArgs {
    /// text, markdown, html or json; taken from the file extension otherwise.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    source_uri: Option<String>,
    /// YYYY-MM-DD; anchors relative dates in the text.
    #[arg(long)]
    publish_date: Option<String>,
    #[arg(long)]
    author: Option<String>,
}

impl MetaArgs {
    fn for_file(&self, path: &Path) -> UploadMeta {
        UploadMeta {
            title: self.title.clone(),
            source_uri: Some(self.source_uri.clone().unwrap_or_else(|| path.display().to_string())),
            publish_date: self.publish_date.clone(),
            author: self.author.clone(),
        }
    }
}

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::FAILURE
}

fn read(path: &Path) -> Result<Vec<u8>, ApiError> {
    std::fs::read(path).map_err(|e| ApiError::bad_request("IoFailure", format!("{}: {e}", path.display())))
}

fn print_json(v: &impl serde::Serialize) {
    out!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli, config: Config) -> Result<(), ApiError> {
    let providers = ProviderSet::from_config(&config.providers)
        .map_err(|e| ApiError::bad_request("InvalidConfig", e.to_string()))?;
    let open = || {
        Engine::builder(FileStorage::new(&config.data_dir))
            .providers(providers.clone())
            .pipeline(config.pipeline.clone())
            .chunking(config.chunking)
            .open()
    };
    match cli.command {
        Command::Corpus(CorpusCmd::Create { name, chunking }) => {
            let c = open()?.create_corpus(&name, chunking.strategy())?;
            out!("{}", c.id);
        }
        Command::Corpus(CorpusCmd::Add { corpus, files, meta }) => {
            let engine = open()?;
            for path in files {
                let format = format_for(&path.display().to_string(), meta.format.as_deref())?;
                let d = engine.add_document(&corpus, &read(&path)?, format, &meta.for_file(&path))?;
                out!("{}\t{}\t{} sentences", d.id, d.title, d.sentences);
            }
        }
        Command::Corpus(CorpusCmd::Build { corpus }) => {
            let c = open()?.build_index(&corpus)?;
            let chunks = c.index.as_ref().map_or(0, |i| i.chunk_count);
            out!("{}\tready\t{} documents\t{} chunks", c.id, c.documents.len(), chunks);
        }
        Command::Corpus(CorpusCmd::List) => {
            for c in open()?.list_corpora() {
                let state = serde_json::to_value(c.index_state).expect("serializable");
                out!("{}\t{}\t{}\t{} documents", c.id, c.name, state.as_str().unwrap_or_default(), c.documents.len());
            }
        }
        Command::Corpus(CorpusCmd::Chunks { corpus }) => {
            for chunk in open()?.list_chunks(&corpus)? {
                out!("{}", serde_json::to_string(&chunk).expect("serializable"));
            }
        }
        Command::Ask { corpus, query, json, trace, search } => {
            let engine = open()?;
            let settings = RetrievalSettings {
                search: match search {
                    Search::Hybrid => SearchMethod::Hybrid,
                    Search::Sparse => SearchMethod::Sparse,
                },
                ..Default::default()
            };
            let turn = engine.ask(&corpus, &query, &settings, &mut |e| {
                if trace {
                    eprintln!("{}", serde_json::to_string(e).expect("serializable"));
                }
            })?;
            match (turn.status, turn.answer) {
                (TurnStatus::Ok, Some(answer)) if json => print_json(&answer),
                (TurnStatus::Ok, Some(answer)) => {
                    let loaded = engine.loaded(&corpus)?;
                    out!("{}", trustrag::report::render(&answer, &loaded.docs).trim_end());
                }
                _ => return Err(turn.error.unwrap_or_else(|| ApiError::internal("turn failed"))),
            }
        }
        Command::Index(IndexCmd::Build { files, out, chunking, meta }) => {
            let mut docs = Vec::new();
            for path in &files {
                let format = format_for(&path.display().to_string(), meta.format.as_deref())?;
                let m = meta.for_file(path);
                let metadata: BTreeMap<String, String> = [
                    ("title", m.title),
                    ("source_uri", m.source_uri),
                    ("publish_date", m.publish_date),
                    ("author", m.author),
                ]
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
                .collect();
                let doc = parse_document(&read(path)?, format, &metadata)
                    .map_err(|e| ApiError::new(422, "IngestFailed", format!("{}: {e}", path.display())))?;
                docs.push(doc);
            }
            let strategy = chunking.strategy().unwrap_or(config.chunking);
            let built = build_corpus(&docs, strategy, providers.coref.as_deref(), providers.embedder.as_deref())
                .map_err(|e| ApiError::new(502, "BuildFailed", e.to_string()))?;
            let manifest =
                store::persist(&out, &built, BTreeMap::new()).map_err(|e| ApiError::internal(e.to_string()))?;
            print_json(&manifest);
        }
        Command::Index(IndexCmd::Inspect { dir }) => {
            let manifest = store::inspect(&dir).map_err(|e| ApiError::new(422, "IndexUnreadable", e.to_string()))?;
            print_json(&manifest);
        }
        Command::Serve { listen } => {
            let engine = Arc::new(open()?);
            let addr = listen.unwrap_or(config.listen.clone());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ApiError::internal(e.to_string()))?;
            runtime
                .block_on(async {
                    let listener = tokio::net::TcpListener::bind(&addr).await?;
                    eprintln!("listening on http://{}", listener.local_addr()?);
                    trustrag::server::serve(engine, listener).await
                })
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match Config::from_env(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    match run(cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
