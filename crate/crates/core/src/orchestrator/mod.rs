//! The mention-to-answer pipeline.
//!
//! A run plans the query (rewrite, then maybe a clarifying question),
//! searches, turns results into reference cards and composes a cited
//! answer. [`Agent`] also owns the per-room clarification state: at most one
//! question is pending per room, only the user who asked may resume it, and
//! it lapses after `clarification_expiry_ms`.
//!
//! The agent never touches room history or the logs; it returns an
//! [`AgentOutcome`] and the caller posts, fans out and records it.

mod config;
mod report;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::answer::{parse_citations, render, render_text, CitationWarning};
use crate::clock::{Clock, SystemClock};
use crate::llm::{GatewayError, LlmGateway, PlanOptions};
use crate::model::{validate_context, CitedAnswer, DialogueContext, Locale, QueryPlan, ReferenceCard, SerpEntry, Utterance};
use crate::page::{build_references, PageFetcher, ReferenceReport, ReferenceSettings, TokenBudget, DEFAULT_PARALLELISM};
use crate::search::{SearchError, SearchProvider};

pub use config::{ConfigError, Mode, PipelineConfig, DEFAULT_CLARIFICATION_EXPIRY_MS, DEFAULT_PAGE_SIZE};
pub use report::{ClarificationTrace, ModeReport, ModeRequest, ReportAnswer, RunError};

pub const DEFAULT_MENTION: &str = "@CoSearchAgent";
pub const AGENT_ID: &str = "cosearch-agent";

/// The query left after removing every mention token, with whitespace
/// collapsed. `None` when the text does not mention the agent.
pub fn strip_mention(text: &str, token: &str) -> Option<String> {
    if token.is_empty() || !text.contains(token) {
        return None;
    }
    Some(text.replace(token, " ").split_whitespace().collect::<Vec<_>>().join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingClarification {
    pub room_id: String,
    pub asking_user_id: String,
    pub pipeline_id: String,
    pub query_plan: QueryPlan,
    pub issued_at: i64,
    pub expiry_ms: i64,
}

impl PendingClarification {
    pub fn is_expired(&self, now_ms: i64) -> bool {
        now_ms >= self.issued_at.saturating_add(self.expiry_ms)
    }
}

/// A completed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub pipeline_id: String,
    pub mode: Mode,
    pub plan: QueryPlan,
    pub results: Vec<SerpEntry>,
    /// Only in [`Mode::FullAgent`]; otherwise the results are shown as cards
    /// with their snippets.
    pub references: Option<ReferenceReport>,
    pub answer: Option<CitedAnswer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CitationWarning>,
    /// Answer display string, if there is an answer.
    pub rendered: Option<String>,
}

impl PipelineRun {
    pub fn effective_query(&self) -> &str {
        &self.plan.rewritten
    }

    /// Cards to show in the room: references when built, else snippets.
    pub fn cards(&self) -> Vec<ReferenceCard> {
        match &self.references {
            Some(report) => report.cards.clone(),
            None => self
                .results
                .iter()
                .map(|e| ReferenceCard {
                    rank: e.rank,
                    title: e.title.clone(),
                    link: e.link.clone(),
                    reference: e.snippet.clone(),
                    source_rank: e.rank,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Planning,
    Search,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineFailure {
    pub pipeline_id: String,
    pub stage: FailureStage,
    /// Diagnostic for the logs.
    pub error: String,
    /// Localized text posted to the room.
    pub notice: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentOutcome {
    /// A clarifying question was issued and is now pending.
    Clarify {
        pipeline_id: String,
        question: String,
        plan: QueryPlan,
    },
    Answered(Box<PipelineRun>),
    Failed(PipelineFailure),
    /// The message did not concern the agent.
    Ignored,
}

impl AgentOutcome {
    pub fn pipeline_id(&self) -> Option<&str> {
        match self {
            AgentOutcome::Clarify { pipeline_id, .. } => Some(pipeline_id),
            AgentOutcome::Answered(run) => Some(&run.pipeline_id),
            AgentOutcome::Failed(f) => Some(&f.pipeline_id),
            AgentOutcome::Ignored => None,
        }
    }
}

pub(crate) fn failure_notice(locale: Locale, stage: FailureStage) -> String {
    match (locale, stage) {
        (Locale::En, FailureStage::Planning | FailureStage::Answer) => {
            "Sorry, I could not complete this search: the language model is unavailable.".into()
        }
        (Locale::En, FailureStage::Search) => {
            "Sorry, I could not complete this search: the search service is unavailable.".into()
        }
        (Locale::Zh, FailureStage::Planning | FailureStage::Answer) => "抱歉，本次搜索未能完成：语言模型暂时不可用。".into(),
        (Locale::Zh, FailureStage::Search) => "抱歉，本次搜索未能完成：搜索服务暂时不可用。".into(),
    }
}

#[derive(Debug, Default)]
struct RoomState {
    pipelines: u64,
    pending: Option<PendingClarification>,
}

pub struct Agent {
    gateway: LlmGateway,
    search: Arc<dyn SearchProvider>,
    fetcher: Arc<dyn PageFetcher>,
    clock: Arc<dyn Clock>,
    mention: String,
    parallelism: usize,
    rooms: Mutex<HashMap<String, RoomState>>,
}

impl Agent {
    pub fn new(gateway: LlmGateway, search: Arc<dyn SearchProvider>, fetcher: Arc<dyn PageFetcher>) -> Self {
        Self {
            gateway,
            search,
            fetcher,
            clock: Arc::new(SystemClock),
            mention: DEFAULT_MENTION.into(),
            parallelism: DEFAULT_PARALLELISM,
            rooms: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_mention(mut self, token: impl Into<String>) -> Self {
        self.mention = token.into();
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn mention(&self) -> &str {
        &self.mention
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    /// The room's pending clarification, expired or not.
    pub fn pending(&self, room_id: &str) -> Option<PendingClarification> {
        self.rooms.lock().expect("poisoned").get(room_id).and_then(|r| r.pending.clone())
    }

    /// Reserves the next pipeline id for a room: `<room>-<n>`, n from 1.
    pub fn allocate_pipeline_id(&self, room_id: &str) -> String {
        let mut rooms = self.rooms.lock().expect("poisoned");
        let room = rooms.entry(room_id.to_owned()).or_default();
        room.pipelines += 1;
        format!("{room_id}-{}", room.pipelines)
    }

    /// Handles a message that mentions the agent. `history` is the room's
    /// conversation before the mention, in room order.
    pub async fn handle_mention(
        &self,
        room_id: &str,
        user_id: &str,
        message_text: &str,
        history: &[Utterance],
        config: &PipelineConfig,
    ) -> AgentOutcome {
        let pipeline_id = self.allocate_pipeline_id(room_id);
        self.handle_mention_as(pipeline_id, room_id, user_id, message_text, history, config)
            .await
    }

    /// [`Agent::handle_mention`] under a pipeline id the caller reserved
    /// with [`Agent::allocate_pipeline_id`].
    pub async fn handle_mention_as(
        &self,
        pipeline_id: String,
        room_id: &str,
        user_id: &str,
        message_text: &str,
        history: &[Utterance],
        config: &PipelineConfig,
    ) -> AgentOutcome {
        let query = strip_mention(message_text, &self.mention).unwrap_or_else(|| message_text.trim().to_owned());
        let context = validate_context(history, config.window_limit);

        let room_has_pending = {
            let now = self.clock.now_ms();
            let mut rooms = self.rooms.lock().expect("poisoned");
            let room = rooms.entry(room_id.to_owned()).or_default();
            if room.pending.as_ref().is_some_and(|p| p.is_expired(now)) {
                room.pending = None;
            }
            room.pending.is_some()
        };
        let allow_clarification = config.max_clarification_rounds > 0 && !room_has_pending;

        let plan = match self.plan(&context, &query, config, allow_clarification).await {
            Ok(plan) => plan,
            Err(e) => return AgentOutcome::Failed(self.failure(&pipeline_id, FailureStage::Planning, &e, config)),
        };
        if plan.needs_clarification {
            if let Some(question) = plan.clarifying_question.clone() {
                let pending = PendingClarification {
                    room_id: room_id.to_owned(),
                    asking_user_id: user_id.to_owned(),
                    pipeline_id: pipeline_id.clone(),
                    query_plan: plan.clone(),
                    issued_at: self.clock.now_ms(),
                    expiry_ms: config.clarification_expiry_ms,
                };
                self.rooms.lock().expect("poisoned").entry(room_id.to_owned()).or_default().pending = Some(pending);
                info!(%pipeline_id, "clarification pending");
                return AgentOutcome::Clarify {
                    pipeline_id,
                    question,
                    plan,
                };
            }
        }
        self.finish(pipeline_id, plan, config).await
    }

    /// Handles a message that does not mention the agent. Resumes a pending
    /// clarification when `user_id` asked it and it has not expired.
    /// `history` ends with the reply itself.
    pub async fn handle_reply(
        &self,
        room_id: &str,
        user_id: &str,
        history: &[Utterance],
        config: &PipelineConfig,
    ) -> AgentOutcome {
        let pending = {
            let now = self.clock.now_ms();
            let mut rooms = self.rooms.lock().expect("poisoned");
            let Some(room) = rooms.get_mut(room_id) else {
                return AgentOutcome::Ignored;
            };
            match &room.pending {
                Some(p) if p.is_expired(now) => {
                    info!(pipeline_id = %p.pipeline_id, "clarification expired");
                    room.pending = None;
                    return AgentOutcome::Ignored;
                }
                Some(p) if p.asking_user_id == user_id => room.pending.take().expect("checked"),
                _ => return AgentOutcome::Ignored,
            }
        };
        let context = validate_context(history, config.window_limit);
        let plan = match self.plan(&context, &pending.query_plan.original, config, false).await {
            Ok(plan) => plan,
            Err(e) => {
                return AgentOutcome::Failed(self.failure(&pending.pipeline_id, FailureStage::Planning, &e, config))
            }
        };
        self.finish(pending.pipeline_id, plan, config).await
    }

    async fn finish(&self, pipeline_id: String, plan: QueryPlan, config: &PipelineConfig) -> AgentOutcome {
        match self.retrieve(&plan, config).await {
            Ok(retrieval) => AgentOutcome::Answered(Box::new(PipelineRun {
                pipeline_id,
                mode: config.mode,
                plan,
                results: retrieval.results,
                references: retrieval.references,
                answer: retrieval.answer,
                warnings: retrieval.warnings,
                rendered: retrieval.rendered,
            })),
            Err(e) => {
                let stage = match e {
                    RetrievalError::Search(_) => FailureStage::Search,
                    RetrievalError::Answer(_) => FailureStage::Answer,
                };
                AgentOutcome::Failed(self.failure(&pipeline_id, stage, &e, config))
            }
        }
    }

    fn failure(
        &self,
        pipeline_id: &str,
        stage: FailureStage,
        error: &dyn std::fmt::Display,
        config: &PipelineConfig,
    ) -> PipelineFailure {
        warn!(%pipeline_id, ?stage, %error, "pipeline failed");
        PipelineFailure {
            pipeline_id: pipeline_id.to_owned(),
            stage,
            error: error.to_string(),
            notice: failure_notice(config.locale, stage),
        }
    }

    /// Query plan for modes that rewrite; the query as typed otherwise.
    pub(crate) async fn plan(
        &self,
        context: &DialogueContext,
        query: &str,
        config: &PipelineConfig,
        allow_clarification: bool,
    ) -> Result<QueryPlan, GatewayError> {
        if query.trim().is_empty() {
            return Err(GatewayError::EmptyQuery);
        }
        if !config.mode.plans() {
            return Ok(QueryPlan::passthrough(query.trim()));
        }
        self.gateway
            .plan_query(context, query, config.locale, PlanOptions { allow_clarification })
            .await
    }

    /// Search, and for the full agent also references and the answer.
    pub(crate) async fn retrieve(&self, plan: &QueryPlan, config: &PipelineConfig) -> Result<Retrieval, RetrievalError> {
        let results = self
            .search
            .search(&plan.rewritten, config.max_results)
            .await
            .map_err(RetrievalError::Search)?;
        if config.mode != Mode::FullAgent {
            return Ok(Retrieval {
                results,
                references: None,
                answer: None,
                warnings: Vec::new(),
                rendered: None,
            });
        }
        let settings = ReferenceSettings {
            budget: TokenBudget {
                max_tokens: config.token_cap,
            },
            locale: config.locale,
            parallelism: self.parallelism,
        };
        let references = build_references(&results, plan, self.fetcher.as_ref(), &self.gateway, settings).await;
        let raw = self
            .gateway
            .compose_answer(&plan.rewritten, &references.cards, config.locale)
            .await
            .map_err(RetrievalError::Answer)?;
        let parsed = parse_citations(&raw, references.cards.len());
        for warning in &parsed.warnings {
            warn!(%warning, "citation dropped");
        }
        let rendered = render(&parsed.answer, &references.cards, config.locale)
            .unwrap_or_else(|_| render_text(&parsed.answer));
        Ok(Retrieval {
            results,
            references: Some(references),
            answer: Some(parsed.answer),
            warnings: parsed.warnings,
            rendered: Some(rendered),
        })
    }
}

pub(crate) struct Retrieval {
    pub results: Vec<SerpEntry>,
    pub references: Option<ReferenceReport>,
    pub answer: Option<CitedAnswer>,
    pub warnings: Vec<CitationWarning>,
    pub rendered: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum RetrievalError {
    #[error(transparent)]
    Search(SearchError),
    #[error(transparent)]
    Answer(GatewayError),
}
