//! Chat-completions provider for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, LlmProvider, ProviderError, ProviderErrorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiSettings {
    /// Base URL up to and excluding `/chat/completions`.
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_context_limit")]
    pub context_limit: usize,
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn default_model() -> String {
    "gpt-3.5-turbo-1106".into()
}
fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout_secs() -> u64 {
    30
}
fn default_context_limit() -> usize {
    16_385
}

impl Default for OpenAiSettings {
    fn default() -> Self {
        Self {
            base_url: default_base_url(),
            model: default_model(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout_secs(),
            context_limit: default_context_limit(),
        }
    }
}

pub struct OpenAiCompatProvider {
    settings: OpenAiSettings,
    api_key: String,
    client: reqwest::Client,
}

impl OpenAiCompatProvider {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(settings: OpenAiSettings) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&settings.api_key_env).map_err(|_| {
            ProviderError::new(
                ProviderErrorKind::Rejected,
                format!("environment variable {} is not set", settings.api_key_env),
            )
        })?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Transport, e.to_string()))?;
        Ok(Self {
            settings,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[async_trait]
impl LlmProvider for OpenAiCompatProvider {
    fn model_id(&self) -> &str {
        &self.settings.model
    }

    fn context_limit(&self) -> usize {
        self.settings.context_limit
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "n": request.candidate_count,
        });
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let response = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| {
                let kind = if e.is_timeout() {
                    ProviderErrorKind::Timeout
                } else {
                    ProviderErrorKind::Transport
                };
                ProviderError::new(kind, e.to_string())
            })?;

        let status = response.status();
        if !status.is_success() {
            let retry_after_ms = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(|s| s * 1000);
            let kind = match status.as_u16() {
                429 => ProviderErrorKind::RateLimited,
                500..=599 => ProviderErrorKind::Transport,
                _ => ProviderErrorKind::Rejected,
            };
            let mut err = ProviderError::new(kind, format!("HTTP {status}"));
            err.retry_after_ms = retry_after_ms;
            return Err(err);
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| ProviderError::new(ProviderErrorKind::Transport, e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::new(ProviderErrorKind::Rejected, "response has no choices"))
    }
}
