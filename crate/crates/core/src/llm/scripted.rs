//! Deterministic providers for tests and offline replay.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmProvider, ProviderError, ProviderErrorKind, Task};

/// One canned reply. A rule matches a request when the task is equal, the
/// input hash (if given) is equal, and every `when` variable is present and
/// contains the given substring. Exactly one of `response` or `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub when: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProviderErrorKind>,
}

impl ScriptRule {
    pub fn respond(task: Task, response: impl Into<String>) -> Self {
        Self {
            task,
            input_hash: None,
            when: BTreeMap::new(),
            response: Some(response.into()),
            error: None,
        }
    }

    pub fn fail(task: Task, kind: ProviderErrorKind) -> Self {
        Self {
            task,
            input_hash: None,
            when: BTreeMap::new(),
            response: None,
            error: Some(kind),
        }
    }

    /// Adds a substring condition on a request variable.
    pub fn when(mut self, variable: impl Into<String>, contains: impl Into<String>) -> Self {
        self.when.insert(variable.into(), contains.into());
        self
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.input_hash = Some(hash.into());
        self
    }

    fn matches(&self, request: &CompletionRequest) -> bool {
        self.task == request.task
            && self
                .input_hash
                .as_ref()
                .is_none_or(|h| *h == request.input_hash())
            && self.when.iter().all(|(var, needle)| {
                request
                    .variables
                    .get(var)
                    .is_some_and(|value| value.contains(needle.as_str()))
            })
    }
}

/// Replies from an ordered rule list; the first matching rule wins.
///
/// Holds no mutable state, so replies are a pure function of the request.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    rules: Vec<ScriptRule>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

#[async_trait]
impl LlmProvider for ScriptedProvider {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn context_limit(&self) -> usize {
        usize::MAX
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let rule = self.rules.iter().find(|r| r.matches(request)).ok_or_else(|| {
            ProviderError::new(
                ProviderErrorKind::Unscripted,
                format!(
                    "no scripted reply for task {} (input hash {})",
                    request.task,
                    request.input_hash()
                ),
            )
        })?;
        match (&rule.response, rule.error) {
            (_, Some(kind)) => Err(ProviderError::new(kind, "scripted failure")),
            (Some(text), None) => Ok(text.clone()),
            (None, None) => Err(ProviderError::new(
                ProviderErrorKind::Unscripted,
                "scripted rule has neither response nor error",
            )),
        }
    }
}

/// Wraps a provider and keeps every request it forwards.
pub struct RecordingProvider {
    inner: Arc<dyn LlmProvider>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn LlmProvider>) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("poisoned").clone()
    }

    pub fn count(&self, task: Task) -> usize {
        self.requests
            .lock()
            .expect("poisoned")
            .iter()
            .filter(|r| r.task == task)
            .count()
    }
}

#[async_trait]
impl LlmProvider for RecordingProvider {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn context_limit(&self) -> usize {
        self.inner.context_limit()
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.requests.lock().expect("poisoned").push(request.clone());
        self.inner.complete(request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Locale;

    fn request(task: Task, vars: &[(&str, &str)]) -> CompletionRequest {
        CompletionRequest {
            task,
            locale: Locale::En,
            variables: vars.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            prompt: String::new(),
            temperature: 0.0,
            candidate_count: 1,
            model_id: "scripted".into(),
            max_input_tokens: 5000,
        }
    }

    #[tokio::test]
    async fn first_matching_rule_wins() {
        let provider = ScriptedProvider::new(vec![
            ScriptRule::respond(Task::Extract, "A").when("page", "alpha"),
            ScriptRule::fail(Task::Extract, ProviderErrorKind::Timeout).when("page", "beta"),
            ScriptRule::respond(Task::Extract, "fallback"),
        ]);
        let r = request(Task::Extract, &[("page", "the alpha page")]);
        assert_eq!(provider.complete(&r).await.unwrap(), "A");
        assert_eq!(provider.complete(&r).await.unwrap(), "A");
        let err = provider
            .complete(&request(Task::Extract, &[("page", "beta")]))
            .await
            .unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Timeout);
        assert!(err.retryable);
        assert_eq!(
            provider.complete(&request(Task::Extract, &[("page", "other")])).await.unwrap(),
            "fallback"
        );
    }

    #[tokio::test]
    async fn hash_rules_and_unscripted_requests() {
        let r = request(Task::Rag, &[("query", "q")]);
        let provider = ScriptedProvider::new(vec![ScriptRule::respond(Task::Rag, "hit").with_hash(r.input_hash())]);
        assert_eq!(provider.complete(&r).await.unwrap(), "hit");
        let miss = provider.complete(&request(Task::Rag, &[("query", "other")])).await.unwrap_err();
        assert_eq!(miss.kind, ProviderErrorKind::Unscripted);
        assert!(!miss.retryable);
    }

    #[test]
    fn rules_deserialize_from_fixture_json() {
        let rule: ScriptRule = serde_json::from_str(
            r#"{"task":"extract","when":{"page":"Fan Xian"},"response":"```\nreference: x\n```"}"#,
        )
        .unwrap();
        assert_eq!(rule.when["page"], "Fan Xian");
        let rule: ScriptRule = serde_json::from_str(r#"{"task":"rag","error":"transport"}"#).unwrap();
        assert_eq!(rule.error, Some(ProviderErrorKind::Transport));
    }

    #[tokio::test]
    async fn recorder_counts_by_task() {
        let inner = Arc::new(ScriptedProvider::new(vec![ScriptRule::respond(Task::Rag, "x")]));
        let rec = RecordingProvider::new(inner);
        rec.complete(&request(Task::Rag, &[])).await.unwrap();
        rec.complete(&request(Task::Extract, &[])).await.unwrap_err();
        assert_eq!(rec.count(Task::Rag), 1);
        assert_eq!(rec.count(Task::Extract), 1);
        assert_eq!(rec.requests().len(), 2);
    }
}
