//! Language-model access.
//!
//! All model calls go through [`LlmGateway`], which renders the task prompt
//! from a [`PromptTemplate`], sends a [`CompletionRequest`] to an
//! [`LlmProvider`] and parses the fenced key/value reply.

mod gateway;
mod openai;
mod scripted;
mod structured;
mod template;

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::Locale;

pub use gateway::{GatewayError, LlmGateway, PlanOptions};
pub use openai::{OpenAiCompatProvider, OpenAiSettings};
pub use scripted::{RecordingProvider, ScriptRule, ScriptedProvider};
pub use structured::{parse_block, OutputBlock, StructuredError};
pub use template::{PromptTemplate, TemplateError, TemplateSet, DEFAULT_DEMONSTRATIONS};

/// The five prompt tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Rewrite,
    Clarify,
    Extract,
    Rag,
    DirectAnswer,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Rewrite,
        Task::Clarify,
        Task::Extract,
        Task::Rag,
        Task::DirectAnswer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Rewrite => "rewrite",
            Task::Clarify => "clarify",
            Task::Extract => "extract",
            Task::Rag => "rag",
            Task::DirectAnswer => "direct_answer",
        }
    }

    /// Keys allowed in the reply block, in canonical order.
    pub fn output_keys(self) -> &'static [&'static str] {
        match self {
            Task::Rewrite => &["reasoning", "complete", "rewritten"],
            Task::Clarify => &["reasoning", "ambiguous", "question"],
            Task::Extract => &["reference"],
            Task::Rag | Task::DirectAnswer => &["answer"],
        }
    }

    /// Keys that must be present for the reply to be well formed.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Task::Rewrite => &["complete", "rewritten"],
            Task::Clarify => &["ambiguous", "question"],
            Task::Extract => &["reference"],
            Task::Rag | Task::DirectAnswer => &["answer"],
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// One model call. Pipeline calls always use temperature 0 and a single
/// candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub task: Task,
    pub locale: Locale,
    pub variables: BTreeMap<String, String>,
    /// Fully rendered prompt text.
    pub prompt: String,
    pub temperature: f32,
    pub candidate_count: u32,
    pub model_id: String,
    pub max_input_tokens: usize,
}

impl CompletionRequest {
    /// Stable digest of the task and its variables, independent of template
    /// wording. Scripted fixtures are keyed on it.
    pub fn input_hash(&self) -> String {
        input_hash(self.task, &self.variables)
    }
}

pub fn input_hash(task: Task, variables: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(task.name().as_bytes());
    for (k, v) in variables {
        hasher.update([0u8]);
        hasher.update(k.as_bytes());
        hasher.update([0u8]);
        hasher.update(v.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    Transport,
    Timeout,
    RateLimited,
    Rejected,
    Unscripted,
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("{kind:?} error from model provider: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
    pub retryable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_ms: Option<u64>,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        let retryable = matches!(
            kind,
            ProviderErrorKind::Transport | ProviderErrorKind::Timeout | ProviderErrorKind::RateLimited
        );
        Self {
            kind,
            message: message.into(),
            retryable,
            retry_after_ms: None,
        }
    }
}

/// A backend that turns a rendered prompt into raw reply text.
#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Maximum prompt size the model accepts, in tokens.
    fn context_limit(&self) -> usize;

    async fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_task_and_variables_only() {
        let mut vars = BTreeMap::new();
        vars.insert("query".to_string(), "q".to_string());
        let a = input_hash(Task::Rewrite, &vars);
        assert_eq!(a.len(), 16);
        assert_eq!(a, input_hash(Task::Rewrite, &vars.clone()));
        assert_ne!(a, input_hash(Task::Clarify, &vars));
        vars.insert("context".to_string(), String::new());
        assert_ne!(a, input_hash(Task::Rewrite, &vars));
    }

    #[test]
    fn task_names_round_trip() {
        for task in Task::ALL {
            assert_eq!(task.name().parse::<Task>().unwrap(), task);
        }
    }
}
