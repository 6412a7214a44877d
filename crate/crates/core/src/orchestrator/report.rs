use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Agent, Mode, PipelineConfig, RetrievalError};
use crate::answer::CitationWarning;
use crate::llm::GatewayError;
use crate::model::{CitedAnswer, DialogueContext, Locale, QueryPlan, ReferenceCard, SerpEntry, Utterance};
use crate::page::DroppedResult;
use crate::search::SearchError;

/// Input to [`Agent::run_mode`].
#[derive(Debug, Clone, Copy)]
pub struct ModeRequest<'a> {
    /// Conversation before the query; trimmed to the window.
    pub transcript: &'a [Utterance],
    pub room_id: &'a str,
    pub user_id: &'a str,
    pub query: &'a str,
    /// Required by [`Mode::WizardOfOz`], ignored otherwise.
    pub human_rewrite: Option<&'a str>,
    /// What the user answers if the agent asks a clarifying question.
    pub clarification_reply: Option<&'a str>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("wizard_of_oz mode needs a human rewrite")]
    MissingRewrite,
    #[error("invalid pipeline config: {0}")]
    Config(#[from] super::ConfigError),
    #[error("query planning failed: {0}")]
    Planning(GatewayError),
    #[error("search failed: {0}")]
    Search(SearchError),
    #[error("answer generation failed: {0}")]
    Answer(GatewayError),
}

impl From<RetrievalError> for RunError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Search(e) => RunError::Search(e),
            RetrievalError::Answer(e) => RunError::Answer(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationTrace {
    pub question: String,
    /// `None` when the scenario supplied no reply; the run then searched the
    /// rewrite without waiting.
    pub reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportAnswer {
    #[serde(flatten)]
    pub answer: CitedAnswer,
    pub cited_ranks: Vec<usize>,
    pub rendered: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CitationWarning>,
}

/// What one mode produced for one query. Serialized as the replay report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeReport {
    #[serde(default)]
    pub scenario: String,
    pub mode: Mode,
    pub locale: Locale,
    pub query: String,
    pub effective_query: String,
    /// Utterances the planner saw.
    pub context_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<QueryPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<ClarificationTrace>,
    pub results: Vec<SerpEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cards: Vec<ReferenceCard>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<DroppedResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<ReportAnswer>,
}

impl ModeReport {
    /// Canonical JSON: pretty-printed, fields in declaration order, trailing
    /// newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

impl Agent {
    /// Runs one query through `config.mode` with no room state involved.
    ///
    /// Modes 3 and 4 plan identically, so they search the same query under
    /// the same provider script. If planning asks a question and the request
    /// carries a reply, the question and the reply are appended to the
    /// context and the query is planned again without clarification.
    pub async fn run_mode(&self, request: ModeRequest<'_>, config: &PipelineConfig) -> Result<ModeReport, RunError> {
        config.validate()?;
        let mut context: DialogueContext = crate::model::validate_context(request.transcript, config.window_limit);
        let context_len = context.len();
        let mut clarification = None;

        let plan = match config.mode {
            Mode::DirectSearch => None,
            Mode::WizardOfOz => {
                let rewrite = request
                    .human_rewrite
                    .filter(|r| !r.trim().is_empty())
                    .ok_or(RunError::MissingRewrite)?;
                let mut plan = QueryPlan::passthrough(request.query.trim());
                plan.rewritten = rewrite.trim().to_owned();
                Some(plan)
            }
            Mode::RewriteThenSearch | Mode::FullAgent => {
                let allow = config.max_clarification_rounds > 0;
                let mut plan = self
                    .plan(&context, request.query, config, allow)
                    .await
                    .map_err(RunError::Planning)?;
                if let Some(question) = plan.clarifying_question.clone().filter(|_| plan.needs_clarification) {
                    let reply = request.clarification_reply.map(str::to_owned);
                    if let Some(reply) = &reply {
                        let last = context.utterances().last().map_or(0, |u| u.timestamp);
                        let mut push = |id: &str, author: &str, text: &str, offset: i64, is_agent: bool| {
                            if let Ok(u) = Utterance::new(id, request.room_id, author, text, last + offset, is_agent) {
                                context.push(u);
                            }
                        };
                        push("clarification", super::AGENT_ID, &question, 1, true);
                        push("clarification-reply", request.user_id, reply, 2, false);
                        plan = self
                            .plan(&context, request.query, config, false)
                            .await
                            .map_err(RunError::Planning)?;
                    } else {
                        // Nobody answers in a replay without a reply: search the rewrite.
                        plan.needs_clarification = false;
                        plan.clarifying_question = None;
                    }
                    clarification = Some(ClarificationTrace { question, reply });
                }
                Some(plan)
            }
        };

        let effective = plan
            .clone()
            .unwrap_or_else(|| QueryPlan::passthrough(request.query.trim()));
        if effective.rewritten.is_empty() {
            return Err(RunError::Planning(GatewayError::EmptyQuery));
        }
        let retrieval = self.retrieve(&effective, config).await?;
        let (cards, dropped) = retrieval
            .references
            .map(|r| (r.cards, r.dropped))
            .unwrap_or_default();
        let answer = retrieval.answer.map(|answer| ReportAnswer {
            cited_ranks: answer.cited_ranks(),
            answer,
            rendered: retrieval.rendered.unwrap_or_default(),
            warnings: retrieval.warnings,
        });
        Ok(ModeReport {
            scenario: String::new(),
            mode: config.mode,
            locale: config.locale,
            query: request.query.trim().to_owned(),
            effective_query: effective.rewritten,
            context_len,
            plan,
            clarification,
            results: retrieval.results,
            cards,
            dropped,
            answer,
        })
    }
}
