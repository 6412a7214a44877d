//! Collaborative search agent for multi-user chat rooms.
//!
//! People chat in a shared room and mention the agent to search. The agent
//! rewrites the query from the conversation, may ask one clarifying
//! question, searches, distills each result page into a short reference,
//! and answers with `[k]` citations next to paginated result cards. Every
//! post, page move and click goes to an append-only behavior log.
//!
//! - [`orchestrator::Agent`] runs one query end to end, in any of four
//!   modes; [`service::ChatService`] puts it in rooms, and
//!   [`service::http`] serves rooms over HTTP and WebSocket.
//! - [`llm`] renders prompts, calls a provider (OpenAI-compatible or
//!   scripted) and parses fenced `key: value` replies.
//! - [`search`] and [`page`] fetch results and pages from the web or from a
//!   local corpus; [`answer`] parses and renders citations.
//! - [`logs`] stores behavior records; [`replay`] runs recorded scenarios
//!   offline and compares modes.

pub mod answer;
pub mod clock;
pub mod logs;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod page;
pub mod replay;
pub mod search;
pub mod service;
