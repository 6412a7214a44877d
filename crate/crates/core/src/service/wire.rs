//! JSON events exchanged over the room connection. Every event is one text
//! frame holding an object tagged by `"type"`.

use serde::{Deserialize, Serialize};

use crate::model::{CitedAnswer, ReferenceCard, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Next,
    Prev,
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientEvent {
    /// Must be the first event on a connection.
    Join { room_id: String, user_id: String },
    PostMessage { text: String },
    /// Same as `post_message`; lets clients tag answers to a question.
    ClarificationReply { text: String },
    PageNav { direction: Direction },
    Click { rank: usize },
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    Joined {
        room_id: String,
        user_id: String,
    },
    /// Full room history, sent on join.
    History { utterances: Vec<Utterance> },
    /// A user post, or an agent failure notice.
    Message { utterance: Utterance },
    AgentAnswer {
        pipeline_id: String,
        /// `text` is the rendered answer.
        utterance: Utterance,
        answer: CitedAnswer,
    },
    ClarifyingQuestion {
        pipeline_id: String,
        asking_user_id: String,
        utterance: Utterance,
    },
    /// One page of the active card set for the receiving user. Cards keep
    /// their 1-based rank within the whole set.
    ResultPage {
        pipeline_id: String,
        effective_query: String,
        cards: Vec<ReferenceCard>,
        page_index: usize,
        page_count: usize,
        total_cards: usize,
    },
    ClickAck {
        pipeline_id: String,
        rank: usize,
        link: String,
    },
    /// Sent only to the connection whose request failed.
    Error { code: String, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_are_tagged_by_type() {
        let nav: ClientEvent = serde_json::from_str(r#"{"type":"page_nav","direction":"next"}"#).unwrap();
        assert_eq!(nav, ClientEvent::PageNav { direction: Direction::Next });
        let click: ClientEvent = serde_json::from_str(r#"{"type":"click","rank":2}"#).unwrap();
        assert_eq!(click, ClientEvent::Click { rank: 2 });
        let json = serde_json::to_string(&ServerEvent::Error {
            code: "not_a_member".into(),
            message: "m".into(),
        })
        .unwrap();
        assert_eq!(json, r#"{"type":"error","code":"not_a_member","message":"m"}"#);
    }
}
