//! Service configuration file (TOML).
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! mention = "@CoSearchAgent"
//! storage_dir = "logs"          # omit to keep logs in memory
//!
//! [pipeline]
//! locale = "en"
//! page_size = 3
//!
//! [llm]
//! provider = "openai"           # or "scripted" with `script = "rules.json"`
//! api_key_env = "OPENAI_API_KEY"
//!
//! [search]
//! provider = "serpapi"          # or "corpus" with `dir = "fixtures/corpus"`
//! api_key_env = "SERPAPI_API_KEY"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Credentials are only ever read from the named environment variables.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatService, ServiceError};
use crate::llm::{LlmGateway, LlmProvider, OpenAiCompatProvider, OpenAiSettings, ScriptRule, ScriptedProvider, TemplateSet};
use crate::logs::{BehaviorLog, JsonlLogStore, LogStore, MemoryLogStore, StorageError, DEFAULT_BUFFER_CAPACITY};
use crate::orchestrator::{Agent, PipelineConfig, DEFAULT_MENTION};
use crate::page::{CorpusFetcher, HttpFetcher, PageFetcher, DEFAULT_FETCH_TIMEOUT, DEFAULT_PARALLELISM};
use crate::search::{Corpus, CorpusError, CorpusIndex, SearchProvider, SerpApiProvider, SerpApiSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmSettings {
    Openai(OpenAiSettings),
    /// Canned replies from a JSON array of rules.
    Scripted { script: PathBuf },
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings::Openai(OpenAiSettings::default())
    }
}

/// Pages are fetched over HTTP for `serpapi` and from the corpus for
/// `corpus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchSettings {
    Serpapi(SerpApiSettings),
    Corpus { dir: PathBuf },
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings::Serpapi(SerpApiSettings::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSettings {
    pub timeout_secs: u64,
    pub parallelism: usize,
}

impl Default for FetchSettings {
    fn default() -> Self {
        Self {
            timeout_secs: DEFAULT_FETCH_TIMEOUT.as_secs(),
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub mention: String,
    pub storage_dir: Option<PathBuf>,
    pub fsync: bool,
    pub log_buffer: usize,
    /// Prompt template directory; the built-in templates when unset.
    pub templates_dir: Option<PathBuf>,
    pub demonstrations: usize,
    pub pipeline: PipelineConfig,
    pub llm: LlmSettings,
    pub search: SearchSettings,
    pub fetch: FetchSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            mention: DEFAULT_MENTION.into(),
            storage_dir: None,
            fsync: true,
            log_buffer: DEFAULT_BUFFER_CAPACITY,
            templates_dir: None,
            demonstrations: crate::llm::DEFAULT_DEMONSTRATIONS,
            pipeline: PipelineConfig::default(),
            llm: LlmSettings::default(),
            search: SearchSettings::default(),
            fetch: FetchSettings::default(),
        }
    }
}

/// Search provider and the page fetcher that goes with it.
pub type Retrieval = (Arc<dyn SearchProvider>, Arc<dyn PageFetcher>);

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Templates(#[from] crate::llm::TemplateError),
    #[error("provider: {0}")]
    Provider(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Reads a JSON array of script rules.
pub fn load_script(path: &Path) -> Result<Vec<ScriptRule>, BuildError> {
    let text = std::fs::read_to_string(path).map_err(|source| BuildError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| BuildError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

impl ServiceConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, BuildError> {
        let mut config: Self = toml::from_str(text).map_err(|e| BuildError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BuildError> {
        let text = std::fs::read_to_string(path).map_err(|source| BuildError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.storage_dir {
            resolve(p);
        }
        if let Some(p) = &mut self.templates_dir {
            resolve(p);
        }
        if let LlmSettings::Scripted { script } = &mut self.llm {
            resolve(script);
        }
        if let SearchSettings::Corpus { dir } = &mut self.search {
            resolve(dir);
        }
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LlmProvider>, BuildError> {
        Ok(match &self.llm {
            LlmSettings::Openai(settings) => Arc::new(
                OpenAiCompatProvider::from_env(settings.clone()).map_err(|e| BuildError::Provider(e.to_string()))?,
            ),
            LlmSettings::Scripted { script } => Arc::new(ScriptedProvider::new(load_script(script)?)),
        })
    }

    pub fn build_gateway(&self, provider: Arc<dyn LlmProvider>) -> Result<LlmGateway, BuildError> {
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(LlmGateway::new(provider)
            .with_templates(Arc::new(templates))
            .with_demonstrations(self.demonstrations))
    }

    pub fn build_retrieval(&self) -> Result<Retrieval, BuildError> {
        Ok(match &self.search {
            SearchSettings::Serpapi(settings) => {
                let search = SerpApiProvider::from_env(settings.clone()).map_err(|e| BuildError::Provider(e.to_string()))?;
                let fetcher = HttpFetcher::new(Duration::from_secs(self.fetch.timeout_secs))
                    .map_err(|e| BuildError::Provider(e.to_string()))?;
                (Arc::new(search), Arc::new(fetcher))
            }
            SearchSettings::Corpus { dir } => {
                let corpus = Arc::new(Corpus::load(dir)?);
                (Arc::new(CorpusIndex::new(corpus.clone())), Arc::new(CorpusFetcher::new(corpus)))
            }
        })
    }

    pub fn build_agent(&self) -> Result<Agent, BuildError> {
        let gateway = self.build_gateway(self.build_provider()?)?;
        let (search, fetcher) = self.build_retrieval()?;
        Ok(Agent::new(gateway, search, fetcher)
            .with_mention(self.mention.clone())
            .with_parallelism(self.fetch.parallelism))
    }

    pub fn build_log(&self) -> Result<BehaviorLog, BuildError> {
        let store: Arc<dyn LogStore> = match &self.storage_dir {
            Some(dir) => {
                let store = JsonlLogStore::open(dir)?;
                Arc::new(if self.fsync { store } else { store.without_sync() })
            }
            None => Arc::new(MemoryLogStore::new()),
        };
        Ok(BehaviorLog::with_capacity(store, self.log_buffer))
    }

    /// Builds the whole service. Needs a Tokio runtime for room workers.
    pub fn build_service(&self) -> Result<ChatService, BuildError> {
        let agent = Arc::new(self.build_agent()?);
        let log = Arc::new(self.build_log()?);
        Ok(ChatService::new(agent, log, self.pipeline.clone())?)
    }
}
