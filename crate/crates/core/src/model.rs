//! Shared domain types: utterances, dialogue context, query plans, search
//! results, reference cards and cited answers.
//!
//! Every type here is a plain immutable value with a canonical snake_case
//! JSON encoding. Logs, the wire protocol and the replay corpus all reuse
//! these encodings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of preceding utterances handed to the model.
pub const DEFAULT_WINDOW_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("utterance text is empty")]
    EmptyText,
    #[error("link `{0}` is not an absolute URL")]
    InvalidLink(String),
    #[error("ranks must be contiguous from 1, found {found} at position {position}")]
    NonContiguousRank { position: usize, found: usize },
    #[error("reference for rank {0} is empty")]
    EmptyReference(usize),
    #[error("citation {citation} outside 1..={reference_count}")]
    CitationOutOfRange {
        citation: usize,
        reference_count: usize,
    },
    #[error("llm-only answer must not carry references or citations")]
    LlmOnlyWithCitations,
}

/// Response language for prompts and user-facing notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Locale {
    #[default]
    En,
    Zh,
}

impl Locale {
    pub const ALL: [Locale; 2] = [Locale::En, Locale::Zh];

    pub fn code(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::Zh => "zh",
        }
    }
}

impl std::str::FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Locale::En),
            "zh" => Ok(Locale::Zh),
            other => Err(format!("unknown locale `{other}`")),
        }
    }
}

/// One message posted in a room, by a user or by the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub room_id: String,
    pub author_id: String,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
    #[serde(default)]
    pub is_agent: bool,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        room_id: impl Into<String>,
        author_id: impl Into<String>,
        text: impl Into<String>,
        timestamp: i64,
        is_agent: bool,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyText);
        }
        Ok(Self {
            id: id.into(),
            room_id: room_id.into(),
            author_id: author_id.into(),
            text,
            timestamp,
            is_agent,
        })
    }

    /// Room order: timestamp first, then id.
    pub fn room_order(&self, other: &Self) -> std::cmp::Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// The trailing window of a room's conversation that a pipeline run sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueContext {
    utterances: Vec<Utterance>,
    window_limit: usize,
}

impl DialogueContext {
    pub fn empty(window_limit: usize) -> Self {
        Self {
            utterances: Vec::new(),
            window_limit: window_limit.max(1),
        }
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn window_limit(&self) -> usize {
        self.window_limit
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Appends an utterance, evicting the oldest one when the window is full.
    pub fn push(&mut self, utterance: Utterance) {
        self.utterances.push(utterance);
        if self.utterances.len() > self.window_limit {
            let excess = self.utterances.len() - self.window_limit;
            self.utterances.drain(..excess);
        }
    }
}

/// Keeps the trailing `min(len, window_limit)` utterances, in the order given.
///
/// The input is expected in stored room order; a `window_limit` of zero is
/// treated as one.
pub fn validate_context(utterances: &[Utterance], window_limit: usize) -> DialogueContext {
    let window_limit = window_limit.max(1);
    let start = utterances.len().saturating_sub(window_limit);
    DialogueContext {
        utterances: utterances[start..].to_vec(),
        window_limit,
    }
}

/// Outcome of query processing for one user query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub original: String,
    pub rewritten: String,
    pub needs_clarification: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarifying_question: Option<String>,
    /// Model reasoning. Kept for the logs, never shown in the room.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_trace: Option<String>,
    /// Set when the model output could not be parsed and a fallback was used.
    #[serde(default)]
    pub degraded: bool,
}

impl QueryPlan {
    /// Plan that searches the query as typed.
    pub fn passthrough(query: impl Into<String>) -> Self {
        let query = query.into();
        Self {
            rewritten: query.clone(),
            original: query,
            needs_clarification: false,
            clarifying_question: None,
            reasoning_trace: None,
            degraded: false,
        }
    }

    pub fn is_consistent(&self) -> bool {
        let has_question = self
            .clarifying_question
            .as_deref()
            .is_some_and(|q| !q.trim().is_empty());
        !self.rewritten.trim().is_empty() && self.needs_clarification == has_question
    }
}

/// One search engine result before reference extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerpEntry {
    pub rank: usize,
    pub title: String,
    pub link: String,
    #[serde(default)]
    pub snippet: String,
}

/// Checks rank contiguity and link validity of a result page.
pub fn validate_serp(entries: &[SerpEntry]) -> Result<(), ModelError> {
    for (position, entry) in entries.iter().enumerate() {
        if entry.rank != position + 1 {
            return Err(ModelError::NonContiguousRank {
                position,
                found: entry.rank,
            });
        }
        if url::Url::parse(&entry.link).is_err() {
            return Err(ModelError::InvalidLink(entry.link.clone()));
        }
    }
    Ok(())
}

/// A search result whose snippet was replaced by an extracted reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCard {
    pub rank: usize,
    pub title: String,
    pub link: String,
    pub reference: String,
    /// Rank of the originating [`SerpEntry`].
    pub source_rank: usize,
}

impl ReferenceCard {
    pub fn from_entry(entry: &SerpEntry, rank: usize, reference: String) -> Result<Self, ModelError> {
        if reference.trim().is_empty() {
            return Err(ModelError::EmptyReference(entry.rank));
        }
        Ok(Self {
            rank,
            title: entry.title.clone(),
            link: entry.link.clone(),
            reference,
            source_rank: entry.rank,
        })
    }
}

/// One answer span and the references cited right after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    /// Distinct 1-based reference ranks in order of appearance.
    pub citations: Vec<usize>,
}

impl Segment {
    pub fn new(text: impl Into<String>, citations: Vec<usize>) -> Self {
        Self {
            text: text.into(),
            citations,
        }
    }
}

/// An answer decomposed into segments with citation sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedAnswer {
    pub segments: Vec<Segment>,
    pub reference_count: usize,
    pub llm_only: bool,
}

impl CitedAnswer {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.llm_only
            && (self.reference_count != 0 || self.segments.iter().any(|s| !s.citations.is_empty()))
        {
            return Err(ModelError::LlmOnlyWithCitations);
        }
        for &citation in self.segments.iter().flat_map(|s| &s.citations) {
            if citation < 1 || citation > self.reference_count {
                return Err(ModelError::CitationOutOfRange {
                    citation,
                    reference_count: self.reference_count,
                });
            }
        }
        Ok(())
    }

    /// Every distinct cited rank, ascending.
    pub fn cited_ranks(&self) -> Vec<usize> {
        let mut ranks: Vec<usize> = self
            .segments
            .iter()
            .flat_map(|s| s.citations.iter().copied())
            .collect();
        ranks.sort_unstable();
        ranks.dedup();
        ranks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt(i: usize) -> Utterance {
        Utterance::new(
            format!("r:{i:06}"),
            "r",
            if i.is_multiple_of(2) { "alice" } else { "bob" },
            format!("message {i}"),
            1_000 + i as i64,
            false,
        )
        .unwrap()
    }

    fn history(n: usize) -> Vec<Utterance> {
        (0..n).map(utt).collect()
    }

    #[test]
    fn window_keeps_last_twenty_of_twenty_five() {
        let all = history(25);
        let ctx = validate_context(&all, 20);
        assert_eq!(ctx.len(), 20);
        assert_eq!(ctx.utterances(), &all[5..]);
    }

    #[test]
    fn window_of_empty_history_is_empty() {
        let ctx = validate_context(&[], 20);
        assert!(ctx.is_empty());
        assert_eq!(ctx.window_limit(), 20);
    }

    #[test]
    fn window_under_limit_is_identity() {
        let all = history(3);
        let ctx = validate_context(&all, 20);
        assert_eq!(ctx.utterances(), &all[..]);
    }

    #[test]
    fn push_evicts_oldest() {
        let mut ctx = validate_context(&history(2), 2);
        ctx.push(utt(2));
        assert_eq!(ctx.len(), 2);
        assert_eq!(ctx.utterances()[0].id, "r:000001");
    }

    #[test]
    fn blank_utterance_is_rejected() {
        assert_eq!(
            Utterance::new("a", "r", "u", "  \n\t", 0, false),
            Err(ModelError::EmptyText)
        );
    }

    #[test]
    fn room_order_breaks_ties_by_id() {
        let a = Utterance::new("r:2", "r", "u", "x", 5, false).unwrap();
        let b = Utterance::new("r:1", "r", "u", "y", 5, false).unwrap();
        assert_eq!(a.room_order(&b), std::cmp::Ordering::Greater);
    }

    #[test]
    fn serp_validation() {
        let mut entries = vec![
            SerpEntry {
                rank: 1,
                title: "a".into(),
                link: "https://a.example/".into(),
                snippet: String::new(),
            },
            SerpEntry {
                rank: 2,
                title: "b".into(),
                link: "https://b.example/x".into(),
                snippet: "s".into(),
            },
        ];
        assert!(validate_serp(&entries).is_ok());
        entries[1].rank = 3;
        assert!(matches!(
            validate_serp(&entries),
            Err(ModelError::NonContiguousRank { position: 1, found: 3 })
        ));
        entries[1].rank = 2;
        entries[1].link = "/relative".into();
        assert!(matches!(validate_serp(&entries), Err(ModelError::InvalidLink(_))));
    }

    #[test]
    fn cited_answer_validation() {
        let ok = CitedAnswer {
            segments: vec![Segment::new("a ", vec![2, 1]), Segment::new(".", vec![])],
            reference_count: 2,
            llm_only: false,
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.cited_ranks(), vec![1, 2]);

        let bad = CitedAnswer {
            segments: vec![Segment::new("a", vec![3])],
            reference_count: 2,
            llm_only: false,
        };
        assert!(bad.validate().is_err());

        let llm_only = CitedAnswer {
            segments: vec![Segment::new("a", vec![1])],
            reference_count: 0,
            llm_only: true,
        };
        assert_eq!(llm_only.validate(), Err(ModelError::LlmOnlyWithCitations));
    }

    #[test]
    fn query_plan_consistency() {
        let mut plan = QueryPlan::passthrough("capital of France");
        assert!(plan.is_consistent());
        plan.needs_clarification = true;
        assert!(!plan.is_consistent());
        plan.clarifying_question = Some("Which France?".into());
        assert!(plan.is_consistent());
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,.?\u{4e00}-\u{4e10}]{1,30}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    fn arb_utterance() -> impl Strategy<Value = Utterance> {
        (
            "[a-z0-9:]{1,8}",
            "[a-z]{1,5}",
            arb_text(),
            any::<i64>(),
            any::<bool>(),
        )
            .prop_map(|(id, author, text, ts, agent)| {
                Utterance::new(id, "room", author, text, ts, agent).unwrap()
            })
    }

    proptest! {
        #[test]
        fn context_is_suffix_of_input(n in 0usize..60, limit in 1usize..40) {
            let all = history(n);
            let ctx = validate_context(&all, limit);
            prop_assert_eq!(ctx.len(), n.min(limit));
            prop_assert!(all.ends_with(ctx.utterances()));
        }

        #[test]
        fn utterance_json_round_trip(u in arb_utterance()) {
            let json = serde_json::to_string(&u).unwrap();
            let back: Utterance = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, u);
        }

        #[test]
        fn cited_answer_json_round_trip(
            segs in proptest::collection::vec((arb_text(), proptest::collection::vec(1usize..10, 0..4)), 0..5),
            count in 0usize..10,
        ) {
            let answer = CitedAnswer {
                segments: segs.into_iter().map(|(t, c)| Segment::new(t, c)).collect(),
                reference_count: count,
                llm_only: count == 0,
            };
            let json = serde_json::to_string(&answer).unwrap();
            let back: CitedAnswer = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, answer);
        }

        #[test]
        fn plan_and_card_json_round_trip(q in arb_text(), r in arb_text(), question in proptest::option::of(arb_text())) {
            let plan = QueryPlan {
                original: q.clone(),
                rewritten: r.clone(),
                needs_clarification: question.is_some(),
                clarifying_question: question,
                reasoning_trace: Some("because".into()),
                degraded: false,
            };
            let back: QueryPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
            prop_assert_eq!(back, plan);

            let card = ReferenceCard { rank: 1, title: q, link: "https://x.example/".into(), reference: r, source_rank: 4 };
            let back: ReferenceCard = serde_json::from_str(&serde_json::to_string(&card).unwrap()).unwrap();
            prop_assert_eq!(back, card);
        }
    }
}
