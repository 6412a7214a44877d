use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;
use tracing::warn;

use super::structured::strip_fences;
use super::{
    parse_block, CompletionRequest, LlmProvider, OutputBlock, ProviderError, StructuredError, Task,
    TemplateSet, DEFAULT_DEMONSTRATIONS,
};
use crate::model::{DialogueContext, Locale, QueryPlan, ReferenceCard};
use crate::page::DEFAULT_TOKEN_CAP;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("{task} call failed: {source}")]
    Provider {
        task: Task,
        #[source]
        source: ProviderError,
    },
    #[error("{task} reply malformed after re-prompt: {error}")]
    Malformed { task: Task, error: StructuredError },
}

impl GatewayError {
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            GatewayError::Provider { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    /// Whether the clarify step runs at all.
    pub allow_clarification: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            allow_clarification: true,
        }
    }
}

enum Attempt<T> {
    Parsed(T),
    Malformed { raw: String, error: StructuredError },
}

/// Prompt assembly and reply parsing around one provider.
#[derive(Clone)]
pub struct LlmGateway {
    provider: Arc<dyn LlmProvider>,
    templates: Arc<TemplateSet>,
    demonstrations: usize,
    max_input_tokens: usize,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        Self {
            provider,
            templates: Arc::new(TemplateSet::builtin()),
            demonstrations: DEFAULT_DEMONSTRATIONS,
            max_input_tokens: DEFAULT_TOKEN_CAP,
        }
    }

    pub fn with_templates(mut self, templates: Arc<TemplateSet>) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_demonstrations(mut self, count: usize) -> Self {
        self.demonstrations = count;
        self
    }

    pub fn with_max_input_tokens(mut self, tokens: usize) -> Self {
        self.max_input_tokens = tokens;
        self
    }

    pub fn provider(&self) -> &Arc<dyn LlmProvider> {
        &self.provider
    }

    fn request(
        &self,
        task: Task,
        locale: Locale,
        variables: BTreeMap<String, String>,
        repair: Option<&str>,
    ) -> CompletionRequest {
        let template = self.templates.get(task, locale);
        let prompt = template.render(&variables, self.demonstrations, repair);
        CompletionRequest {
            task,
            locale,
            variables,
            prompt,
            temperature: 0.0,
            candidate_count: 1,
            model_id: self.provider.model_id().to_owned(),
            max_input_tokens: self.max_input_tokens,
        }
    }

    /// One call plus at most one re-prompt when the reply does not parse.
    async fn call<T>(
        &self,
        task: Task,
        locale: Locale,
        variables: BTreeMap<String, String>,
        interpret: impl Fn(&OutputBlock) -> Result<T, StructuredError>,
    ) -> Result<Attempt<T>, GatewayError> {
        let provider_err = |source| GatewayError::Provider { task, source };

        let first = self.request(task, locale, variables.clone(), None);
        let raw = self.provider.complete(&first).await.map_err(provider_err)?;
        let error = match parse_block(&raw, task).and_then(|b| interpret(&b)) {
            Ok(v) => return Ok(Attempt::Parsed(v)),
            Err(e) => e,
        };

        let mut repaired = variables;
        repaired.insert("repair".to_owned(), error.to_string());
        let second = self.request(task, locale, repaired, Some(&error.to_string()));
        let raw = self.provider.complete(&second).await.map_err(provider_err)?;
        Ok(match parse_block(&raw, task).and_then(|b| interpret(&b)) {
            Ok(v) => Attempt::Parsed(v),
            Err(error) => {
                warn!(%task, %error, "model reply malformed after re-prompt");
                Attempt::Malformed { raw, error }
            }
        })
    }

    /// Rewrites `query` against the conversation and, when allowed, asks the
    /// model whether a clarifying question is needed.
    ///
    /// Malformed replies fall back to searching the query as typed without
    /// clarification; the plan is then flagged `degraded`.
    pub async fn plan_query(
        &self,
        context: &DialogueContext,
        query: &str,
        locale: Locale,
        options: PlanOptions,
    ) -> Result<QueryPlan, GatewayError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(GatewayError::EmptyQuery);
        }
        let rendered_context = render_context(context, locale);
        let mut plan = QueryPlan::passthrough(query);
        let mut reasoning = Vec::new();

        let vars = variables([("context", rendered_context.as_str()), ("query", query)]);
        let rewrite = self
            .call(Task::Rewrite, locale, vars, |block| {
                let complete = block.flag("complete")?;
                let rewritten = block.text("rewritten");
                if !complete && rewritten.is_empty() {
                    return Err(StructuredError::InvalidValue {
                        key: "rewritten",
                        value: String::new(),
                    });
                }
                Ok((complete, rewritten.to_owned(), block.text("reasoning").to_owned()))
            })
            .await?;
        match rewrite {
            Attempt::Parsed((complete, rewritten, why)) => {
                if !complete {
                    plan.rewritten = rewritten;
                }
                if !why.is_empty() {
                    reasoning.push(format!("rewrite: {why}"));
                }
            }
            Attempt::Malformed { .. } => plan.degraded = true,
        }

        if options.allow_clarification {
            let vars = variables([
                ("context", rendered_context.as_str()),
                ("query", plan.rewritten.as_str()),
            ]);
            let clarify = self
                .call(Task::Clarify, locale, vars, |block| {
                    let ambiguous = block.flag("ambiguous")?;
                    let question = block.text("question");
                    if ambiguous && question.is_empty() {
                        return Err(StructuredError::InvalidValue {
                            key: "question",
                            value: String::new(),
                        });
                    }
                    Ok((ambiguous, question.to_owned(), block.text("reasoning").to_owned()))
                })
                .await?;
            match clarify {
                Attempt::Parsed((ambiguous, question, why)) => {
                    if ambiguous {
                        plan.needs_clarification = true;
                        plan.clarifying_question = Some(question);
                    }
                    if !why.is_empty() {
                        reasoning.push(format!("clarify: {why}"));
                    }
                }
                Attempt::Malformed { .. } => plan.degraded = true,
            }
        }

        if !reasoning.is_empty() {
            plan.reasoning_trace = Some(reasoning.join("\n"));
        }
        Ok(plan)
    }

    /// Query-relevant summary of one page, or `""` when the page has nothing
    /// relevant. `page_text` must already be truncated to the token cap.
    pub async fn extract_reference(
        &self,
        rewritten_query: &str,
        page_text: &str,
        locale: Locale,
    ) -> Result<String, GatewayError> {
        if page_text.trim().is_empty() {
            return Ok(String::new());
        }
        let vars = variables([("query", rewritten_query), ("page", page_text)]);
        let attempt = self
            .call(Task::Extract, locale, vars, |block| Ok(block.text("reference").to_owned()))
            .await?;
        Ok(match attempt {
            Attempt::Parsed(reference) => reference,
            Attempt::Malformed { .. } => String::new(),
        })
    }

    /// Raw answer text. With references the `rag` task is used and the text
    /// may carry `[k]` marks; without, the model answers on its own.
    pub async fn compose_answer(
        &self,
        rewritten_query: &str,
        references: &[ReferenceCard],
        locale: Locale,
    ) -> Result<String, GatewayError> {
        let (task, vars) = if references.is_empty() {
            (Task::DirectAnswer, variables([("query", rewritten_query)]))
        } else {
            let listing = render_references(references);
            (
                Task::Rag,
                variables([("query", rewritten_query), ("references", listing.as_str())]),
            )
        };
        let attempt = self
            .call(task, locale, vars, |block| {
                let answer = block.text("answer");
                if answer.is_empty() {
                    return Err(StructuredError::InvalidValue {
                        key: "answer",
                        value: String::new(),
                    });
                }
                Ok(answer.to_owned())
            })
            .await?;
        match attempt {
            Attempt::Parsed(answer) => Ok(answer),
            Attempt::Malformed { raw, error } => {
                let salvaged = strip_fences(&raw);
                if salvaged.is_empty() {
                    Err(GatewayError::Malformed { task, error })
                } else {
                    Ok(salvaged)
                }
            }
        }
    }
}

fn variables<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

/// One `author: text` line per utterance.
pub(crate) fn render_context(context: &DialogueContext, locale: Locale) -> String {
    if context.is_empty() {
        return match locale {
            Locale::En => "(empty)".into(),
            Locale::Zh => "（空）".into(),
        };
    }
    context
        .utterances()
        .iter()
        .map(|u| {
            let text = u.text.split_whitespace().collect::<Vec<_>>().join(" ");
            format!("{}: {}", u.author_id, text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_references(references: &[ReferenceCard]) -> String {
    references
        .iter()
        .map(|c| format!("[{}] {}\n{}", c.rank, c.title, c.reference))
        .collect::<Vec<_>>()
        .join("\n")
}
