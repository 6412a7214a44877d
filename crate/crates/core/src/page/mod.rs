//! Page fetching and reference building.
//!
//! For each search result: fetch the page, convert it to text, keep the first
//! `max_tokens` tokens, and ask the model for a query-relevant reference.
//! Results whose fetch fails or whose reference comes back empty are
//! dropped; survivors are renumbered from 1 in their original order.

mod text;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::llm::LlmGateway;
use crate::model::{Locale, QueryPlan, ReferenceCard, SerpEntry};
use crate::search::Corpus;

pub use text::{count_tokens, html_to_text, truncate_tokens, TokenBudget, DEFAULT_TOKEN_CAP};

pub const DEFAULT_FETCH_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_PARALLELISM: usize = 4;
pub const USER_AGENT: &str = concat!("cosearch/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchError {
    #[error("no page at {0}")]
    NotFound(String),
    #[error("fetching {0} timed out")]
    Timeout(String),
    #[error("fetching {link} failed: {message}")]
    Failed { link: String, message: String },
}

#[async_trait]
pub trait PageFetcher: Send + Sync {
    async fn fetch(&self, link: &str) -> Result<String, FetchError>;

    fn timeout(&self) -> Duration {
        DEFAULT_FETCH_TIMEOUT
    }
}

/// Serves pages from a local corpus. Documents marked unreachable and
/// unknown URLs fail.
#[derive(Debug, Clone)]
pub struct CorpusFetcher {
    corpus: Arc<Corpus>,
}

impl CorpusFetcher {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        Self { corpus }
    }
}

#[async_trait]
impl PageFetcher for CorpusFetcher {
    async fn fetch(&self, link: &str) -> Result<String, FetchError> {
        match self.corpus.get(link) {
            Some(doc) => doc.html.clone().ok_or_else(|| FetchError::Failed {
                link: link.to_owned(),
                message: "marked unreachable".into(),
            }),
            None => Err(FetchError::NotFound(link.to_owned())),
        }
    }
}

/// Plain HTTP GET.
pub struct HttpFetcher {
    client: reqwest::Client,
    timeout: Duration,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Result<Self, FetchError> {
        let client = reqwest::Client::builder()
            .user_agent(USER_AGENT)
            .timeout(timeout)
            .build()
            .map_err(|e| FetchError::Failed {
                link: String::new(),
                message: e.to_string(),
            })?;
        Ok(Self { client, timeout })
    }
}

#[async_trait]
impl PageFetcher for HttpFetcher {
    async fn fetch(&self, link: &str) -> Result<String, FetchError> {
        let failed = |message: String| FetchError::Failed {
            link: link.to_owned(),
            message,
        };
        let response = self.client.get(link).send().await.map_err(|e| {
            if e.is_timeout() {
                FetchError::Timeout(link.to_owned())
            } else {
                failed(e.to_string())
            }
        })?;
        if response.status() == reqwest::StatusCode::NOT_FOUND {
            return Err(FetchError::NotFound(link.to_owned()));
        }
        if !response.status().is_success() {
            return Err(failed(format!("HTTP {}", response.status())));
        }
        response.text().await.map_err(|e| failed(e.to_string()))
    }

    fn timeout(&self) -> Duration {
        self.timeout
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum DropReason {
    FetchFailed(String),
    ExtractionFailed(String),
    EmptyReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedResult {
    pub source_rank: usize,
    pub link: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub cards: Vec<ReferenceCard>,
    pub dropped: Vec<DroppedResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceSettings {
    pub budget: TokenBudget,
    pub locale: Locale,
    /// Upper bound on results processed at the same time.
    pub parallelism: usize,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self {
            budget: TokenBudget::default(),
            locale: Locale::En,
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

async fn reference_for(
    entry: &SerpEntry,
    query: &str,
    fetcher: &dyn PageFetcher,
    gateway: &LlmGateway,
    settings: ReferenceSettings,
) -> Result<String, DropReason> {
    let html = match tokio::time::timeout(fetcher.timeout(), fetcher.fetch(&entry.link)).await {
        Ok(Ok(html)) => html,
        Ok(Err(e)) => return Err(DropReason::FetchFailed(e.to_string())),
        Err(_) => return Err(DropReason::FetchFailed(FetchError::Timeout(entry.link.clone()).to_string())),
    };
    let page = truncate_tokens(&html_to_text(&html), settings.budget);
    let reference = gateway
        .extract_reference(query, &page, settings.locale)
        .await
        .map_err(|e| DropReason::ExtractionFailed(e.to_string()))?;
    if reference.trim().is_empty() {
        return Err(DropReason::EmptyReference);
    }
    Ok(reference)
}

/// Replaces snippets with extracted references, dropping results that have
/// none. Never fails as a whole; an empty card list means the answer falls
/// back to the model alone.
pub async fn build_references(
    entries: &[SerpEntry],
    plan: &QueryPlan,
    fetcher: &dyn PageFetcher,
    gateway: &LlmGateway,
    settings: ReferenceSettings,
) -> ReferenceReport {
    let query = plan.rewritten.as_str();
    // Built eagerly: a lazily mapped stream of async blocks trips the
    // compiler's Send inference when this future is spawned.
    let pending: Vec<_> = entries
        .iter()
        .map(|entry| reference_for(entry, query, fetcher, gateway, settings))
        .collect();
    let outcomes: Vec<_> = stream::iter(pending)
        .buffered(settings.parallelism.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .zip(entries)
        .map(|(outcome, entry)| (entry, outcome))
        .collect();

    let mut report = ReferenceReport::default();
    for (entry, outcome) in outcomes {
        match outcome {
            Ok(reference) => {
                let rank = report.cards.len() + 1;
                report.cards.push(ReferenceCard {
                    rank,
                    title: entry.title.clone(),
                    link: entry.link.clone(),
                    reference,
                    source_rank: entry.rank,
                });
            }
            Err(reason) => {
                match &reason {
                    DropReason::EmptyReference => debug!(rank = entry.rank, link = %entry.link, "no reference extracted"),
                    other => warn!(rank = entry.rank, link = %entry.link, ?other, "result dropped"),
                }
                report.dropped.push(DroppedResult {
                    source_rank: entry.rank,
                    link: entry.link.clone(),
                    reason,
                });
            }
        }
    }
    report
}
