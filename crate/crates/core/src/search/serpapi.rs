//! SerpApi-style JSON search endpoint.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{normalize_results, SearchError, SearchProvider};
use crate::model::SerpEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerpApiSettings {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_engine")]
    pub engine: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_endpoint() -> String {
    "https://serpapi.com/search.json".into()
}
fn default_engine() -> String {
    "google".into()
}
fn default_key_env() -> String {
    "SERPAPI_API_KEY".into()
}
fn default_timeout() -> u64 {
    15
}

impl Default for SerpApiSettings {
    fn default() -> Self {
        Self {
            endpoint: default_endpoint(),
            engine: default_engine(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
        }
    }
}

pub struct SerpApiProvider {
    settings: SerpApiSettings,
    api_key: String,
    client: reqwest::Client,
}

impl SerpApiProvider {
    pub fn from_env(settings: SerpApiSettings) -> Result<Self, SearchError> {
        let api_key = std::env::var(&settings.api_key_env)
            .map_err(|_| SearchError::Unavailable(format!("{} is not set", settings.api_key_env)))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| SearchError::Unavailable(e.to_string()))?;
        Ok(Self {
            settings,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct Response {
    #[serde(default)]
    organic_results: Vec<Organic>,
}

#[derive(Deserialize)]
struct Organic {
    title: Option<String>,
    link: Option<String>,
    snippet: Option<String>,
}

/// Converts a SerpApi JSON body into ranked entries.
pub(crate) fn parse_response(body: &str, max_results: usize) -> Result<Vec<SerpEntry>, SearchError> {
    let parsed: Response =
        serde_json::from_str(body).map_err(|e| SearchError::Unavailable(format!("bad response: {e}")))?;
    let entries = parsed.organic_results.into_iter().filter_map(|o| {
        Some(SerpEntry {
            rank: 0,
            title: o.title.unwrap_or_default(),
            link: o.link?,
            snippet: o.snippet.unwrap_or_default(),
        })
    });
    Ok(normalize_results(entries, max_results))
}

#[async_trait]
impl SearchProvider for SerpApiProvider {
    async fn search(&self, query: &str, max_results: usize) -> Result<Vec<SerpEntry>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let num = max_results.to_string();
        let url = url::Url::parse_with_params(
            &self.settings.endpoint,
            [
                ("engine", self.settings.engine.as_str()),
                ("q", query),
                ("num", num.as_str()),
                ("api_key", self.api_key.as_str()),
            ],
        )
        .map_err(|e| SearchError::Unavailable(format!("bad endpoint: {e}")))?;
        let response = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| SearchError::Unavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(SearchError::Unavailable(format!("HTTP {}", response.status())));
        }
        let body = response
            .text()
            .await
            .map_err(|e| SearchError::Unavailable(e.to_string()))?;
        parse_response(&body, max_results)
    }
}
