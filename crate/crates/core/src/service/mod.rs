//! Chat rooms with an agent member.
//!
//! [`ChatService`] is transport-agnostic: the HTTP and WebSocket front end in
//! [`http`] and the tests drive the same methods. Each room keeps its history,
//! members, live connections and the active result cards. User posts are
//! appended, logged and fanned out immediately; agent work for a room runs on
//! one worker task, one job at a time, in arrival order.

mod config;
pub mod http;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

use crate::logs::{
    BehaviorLog, BehaviorLogRecord, ClickRecord, ConversationKind, ConversationRecord, SearchAction, SearchRecord,
};
use crate::model::{ReferenceCard, Utterance};
use crate::orchestrator::{strip_mention, Agent, AgentOutcome, Mode, PipelineConfig, AGENT_ID};

pub use config::{load_script, BuildError, FetchSettings, LlmSettings, SearchSettings, ServiceConfig};
pub use wire::{ClientEvent, Direction, ServerEvent};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ServiceError {
    #[error("no room `{0}`")]
    UnknownRoom(String),
    #[error("room `{0}` already exists")]
    RoomExists(String),
    #[error("`{user}` is not a member of room `{room}`")]
    NotAMember { room: String, user: String },
    #[error("message is empty")]
    EmptyMessage,
    #[error("the room has no active results")]
    NoActiveResults,
    #[error("no result with rank {rank} (the active set has {count})")]
    UnknownRank { rank: usize, count: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl ServiceError {
    /// Stable code sent in wire `error` events.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownRoom(_) => "unknown_room",
            ServiceError::RoomExists(_) => "room_exists",
            ServiceError::NotAMember { .. } => "not_a_member",
            ServiceError::EmptyMessage => "empty_message",
            ServiceError::NoActiveResults => "no_active_results",
            ServiceError::UnknownRank { .. } => "unknown_rank",
            ServiceError::Config(_) => "config",
            ServiceError::BadRequest(_) => "bad_request",
        }
    }
}

/// Pages needed for `cards` cards; zero for an empty set.
pub fn page_count(cards: usize, page_size: usize) -> usize {
    cards.div_ceil(page_size.max(1))
}

/// Cards on page `index` (0-based).
pub fn page_slice(cards: &[ReferenceCard], page_size: usize, index: usize) -> &[ReferenceCard] {
    let size = page_size.max(1);
    let start = (index * size).min(cards.len());
    let end = (start + size).min(cards.len());
    &cards[start..end]
}

struct Connection {
    id: u64,
    user_id: String,
    tx: mpsc::UnboundedSender<ServerEvent>,
}

struct ActiveCards {
    pipeline_id: String,
    effective_query: String,
    cards: Vec<ReferenceCard>,
    pages: HashMap<String, usize>,
}

struct Room {
    id: String,
    members: BTreeSet<String>,
    history: Vec<Utterance>,
    connections: Vec<Connection>,
    active: Option<ActiveCards>,
}

impl Room {
    fn next_utterance_id(&self) -> String {
        format!("{}:{:06}", self.id, self.history.len() + 1)
    }

    fn broadcast(&mut self, event: &ServerEvent) {
        self.connections.retain(|c| c.tx.send(event.clone()).is_ok());
    }

    fn send_to_user(&mut self, user_id: &str, event: &ServerEvent) {
        self.connections
            .retain(|c| c.user_id != user_id || c.tx.send(event.clone()).is_ok());
    }

    fn check_member(&self, user_id: &str) -> Result<(), ServiceError> {
        if self.members.contains(user_id) {
            Ok(())
        } else {
            Err(ServiceError::NotAMember {
                room: self.id.clone(),
                user: user_id.to_owned(),
            })
        }
    }

    fn page_event(&self, user_id: &str, page_size: usize) -> Option<ServerEvent> {
        let active = self.active.as_ref()?;
        let page_index = active.pages.get(user_id).copied().unwrap_or(0);
        Some(ServerEvent::ResultPage {
            pipeline_id: active.pipeline_id.clone(),
            effective_query: active.effective_query.clone(),
            cards: page_slice(&active.cards, page_size, page_index).to_vec(),
            page_index,
            page_count: page_count(active.cards.len(), page_size),
            total_cards: active.cards.len(),
        })
    }
}

enum Job {
    Mention {
        pipeline_id: String,
        user_id: String,
        utterance: Utterance,
        done: oneshot::Sender<AgentOutcome>,
    },
    Reply {
        user_id: String,
        utterance: Utterance,
        done: oneshot::Sender<AgentOutcome>,
    },
    Barrier(oneshot::Sender<()>),
}

struct RoomHandle {
    state: Mutex<Room>,
    jobs: mpsc::UnboundedSender<Job>,
}

struct Inner {
    agent: Arc<Agent>,
    log: Arc<BehaviorLog>,
    config: PipelineConfig,
    rooms: Mutex<BTreeMap<String, Arc<RoomHandle>>>,
    room_counter: AtomicU64,
    connection_counter: AtomicU64,
}

/// A live connection's event stream.
pub struct Subscription {
    pub connection_id: u64,
    pub events: mpsc::UnboundedReceiver<ServerEvent>,
}

/// Resolves when the agent has finished with a posted message.
pub struct JobTicket(oneshot::Receiver<AgentOutcome>);

impl JobTicket {
    /// `None` if the room worker stopped first.
    pub async fn outcome(self) -> Option<AgentOutcome> {
        self.0.await.ok()
    }
}

pub struct Posted {
    pub utterance: Utterance,
    /// Set when the post started a pipeline or may resume one.
    pub pipeline_id: Option<String>,
    pub ticket: JobTicket,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageView {
    pub page_index: usize,
    pub page_count: usize,
    /// False when the press was clamped at either end; nothing was logged.
    pub moved: bool,
}

#[derive(Clone)]
pub struct ChatService {
    inner: Arc<Inner>,
}

impl ChatService {
    pub fn new(agent: Arc<Agent>, log: Arc<BehaviorLog>, config: PipelineConfig) -> Result<Self, ServiceError> {
        config.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        if config.mode == Mode::WizardOfOz {
            return Err(ServiceError::Config(
                "wizard_of_oz needs an externally supplied rewrite and cannot serve live rooms".into(),
            ));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                agent,
                log,
                config,
                rooms: Mutex::new(BTreeMap::new()),
                room_counter: AtomicU64::new(0),
                connection_counter: AtomicU64::new(0),
            }),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.inner.config
    }

    pub fn log(&self) -> &Arc<BehaviorLog> {
        &self.inner.log
    }

    pub fn agent(&self) -> &Arc<Agent> {
        &self.inner.agent
    }

    fn now(&self) -> i64 {
        self.inner.agent.clock().now_ms()
    }

    fn room(&self, room_id: &str) -> Result<Arc<RoomHandle>, ServiceError> {
        self.inner
            .rooms
            .lock()
            .expect("poisoned")
            .get(room_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownRoom(room_id.to_owned()))
    }

    /// Creates a room, named `room-<n>` unless an id is given. Must be called
    /// inside a Tokio runtime: the room's worker task starts here.
    pub fn create_room(&self, room_id: Option<&str>) -> Result<String, ServiceError> {
        let mut rooms = self.inner.rooms.lock().expect("poisoned");
        let room_id = match room_id {
            Some(id) if id.trim().is_empty() => return Err(ServiceError::UnknownRoom(id.to_owned())),
            Some(id) if rooms.contains_key(id) => return Err(ServiceError::RoomExists(id.to_owned())),
            Some(id) => id.to_owned(),
            None => loop {
                let n = self.inner.room_counter.fetch_add(1, Ordering::SeqCst) + 1;
                let id = format!("room-{n}");
                if !rooms.contains_key(&id) {
                    break id;
                }
            },
        };
        let (tx, rx) = mpsc::unbounded_channel();
        let handle = Arc::new(RoomHandle {
            state: Mutex::new(Room {
                id: room_id.clone(),
                members: BTreeSet::new(),
                history: Vec::new(),
                connections: Vec::new(),
                active: None,
            }),
            jobs: tx,
        });
        rooms.insert(room_id.clone(), handle.clone());
        tokio::spawn(worker(self.inner.clone(), Arc::downgrade(&handle), rx));
        Ok(room_id)
    }

    pub fn rooms(&self) -> Vec<String> {
        self.inner.rooms.lock().expect("poisoned").keys().cloned().collect()
    }

    /// Adds a member. Joining twice is a no-op.
    pub fn join(&self, room_id: &str, user_id: &str) -> Result<(), ServiceError> {
        if user_id.trim().is_empty() {
            return Err(ServiceError::NotAMember {
                room: room_id.to_owned(),
                user: user_id.to_owned(),
            });
        }
        let room = self.room(room_id)?;
        room.state.lock().expect("poisoned").members.insert(user_id.to_owned());
        Ok(())
    }

    pub fn members(&self, room_id: &str) -> Result<Vec<String>, ServiceError> {
        let room = self.room(room_id)?;
        let state = room.state.lock().expect("poisoned");
        Ok(state.members.iter().cloned().collect())
    }

    /// Joins and opens an event stream. The stream starts with `joined`,
    /// the full history and, if cards are active, the user's current page.
    pub fn connect(&self, room_id: &str, user_id: &str) -> Result<Subscription, ServiceError> {
        self.join(room_id, user_id)?;
        let room = self.room(room_id)?;
        let mut state = room.state.lock().expect("poisoned");
        let (tx, rx) = mpsc::unbounded_channel();
        let id = self.inner.connection_counter.fetch_add(1, Ordering::SeqCst) + 1;
        let mut initial = vec![
            ServerEvent::Joined {
                room_id: room_id.to_owned(),
                user_id: user_id.to_owned(),
            },
            ServerEvent::History {
                utterances: state.history.clone(),
            },
        ];
        initial.extend(state.page_event(user_id, self.inner.config.page_size));
        for event in initial {
            let _ = tx.send(event);
        }
        state.connections.push(Connection {
            id,
            user_id: user_id.to_owned(),
            tx,
        });
        Ok(Subscription {
            connection_id: id,
            events: rx,
        })
    }

    /// Drops a connection. Membership is kept.
    pub fn disconnect(&self, room_id: &str, connection_id: u64) {
        if let Ok(room) = self.room(room_id) {
            room.state.lock().expect("poisoned").connections.retain(|c| c.id != connection_id);
        }
    }

    pub fn history(&self, room_id: &str) -> Result<Vec<Utterance>, ServiceError> {
        let room = self.room(room_id)?;
        let state = room.state.lock().expect("poisoned");
        Ok(state.history.clone())
    }

    /// Appends, logs and fans out a user message, then queues the agent: a
    /// pipeline run if the text mentions the agent, otherwise a check for a
    /// pending clarification.
    pub fn post_message(&self, room_id: &str, user_id: &str, text: &str) -> Result<Posted, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let room = self.room(room_id)?;
        let agent = &self.inner.agent;
        let mention = strip_mention(text, agent.mention()).is_some();
        let mut state = room.state.lock().expect("poisoned");
        state.check_member(user_id)?;

        let timestamp = self.now();
        let pipeline_id = if mention {
            Some(agent.allocate_pipeline_id(room_id))
        } else {
            // Best effort: the record is tagged when this post will resume
            // the pending question as things stand now.
            agent
                .pending(room_id)
                .filter(|p| p.asking_user_id == user_id && !p.is_expired(timestamp))
                .map(|p| p.pipeline_id)
        };
        let utterance = Utterance::new(state.next_utterance_id(), room_id, user_id, text, timestamp, false)
            .map_err(|_| ServiceError::EmptyMessage)?;
        state.history.push(utterance.clone());
        self.inner.log.append(ConversationRecord {
            record_id: 0,
            room_id: room_id.to_owned(),
            author_id: user_id.to_owned(),
            text: text.to_owned(),
            timestamp,
            kind: ConversationKind::UserMessage,
            pipeline_id: pipeline_id.clone(),
            reasoning_trace: None,
        });
        state.broadcast(&ServerEvent::Message {
            utterance: utterance.clone(),
        });

        let (done, rx) = oneshot::channel();
        let job = match &pipeline_id {
            Some(id) if mention => Job::Mention {
                pipeline_id: id.clone(),
                user_id: user_id.to_owned(),
                utterance: utterance.clone(),
                done,
            },
            _ => Job::Reply {
                user_id: user_id.to_owned(),
                utterance: utterance.clone(),
                done,
            },
        };
        // The worker lives as long as the room; a send can only fail during
        // shutdown, and the ticket then resolves to None.
        let _ = room.jobs.send(job);
        Ok(Posted {
            utterance,
            pipeline_id,
            ticket: JobTicket(rx),
        })
    }

    /// Moves the user's page by one, clamped. Only a real move is logged.
    pub fn page_nav(&self, room_id: &str, user_id: &str, direction: Direction) -> Result<PageView, ServiceError> {
        let room = self.room(room_id)?;
        let page_size = self.inner.config.page_size;
        let mut state = room.state.lock().expect("poisoned");
        state.check_member(user_id)?;
        let active = state.active.as_mut().ok_or(ServiceError::NoActiveResults)?;
        let pages = page_count(active.cards.len(), page_size);
        let current = active.pages.get(user_id).copied().unwrap_or(0);
        let target = match direction {
            Direction::Next => (current + 1).min(pages.saturating_sub(1)),
            Direction::Prev => current.saturating_sub(1),
        };
        let moved = target != current;
        if moved {
            active.pages.insert(user_id.to_owned(), target);
            self.inner.log.append(SearchRecord {
                record_id: 0,
                room_id: room_id.to_owned(),
                user_id: user_id.to_owned(),
                pipeline_id: active.pipeline_id.clone(),
                action: match direction {
                    Direction::Next => SearchAction::PageNext,
                    Direction::Prev => SearchAction::PagePrev,
                },
                effective_query: active.effective_query.clone(),
                page_index: target,
                timestamp: self.now(),
            });
        }
        if let Some(event) = state.page_event(user_id, page_size) {
            state.send_to_user(user_id, &event);
        }
        Ok(PageView {
            page_index: target,
            page_count: pages,
            moved,
        })
    }

    /// Logs the click and returns the card's link for the client to open.
    pub fn click(&self, room_id: &str, user_id: &str, rank: usize) -> Result<String, ServiceError> {
        let room = self.room(room_id)?;
        let mut state = room.state.lock().expect("poisoned");
        state.check_member(user_id)?;
        let active = state.active.as_ref().ok_or(ServiceError::NoActiveResults)?;
        let card = active
            .cards
            .iter()
            .find(|c| c.rank == rank)
            .ok_or(ServiceError::UnknownRank {
                rank,
                count: active.cards.len(),
            })?;
        let link = card.link.clone();
        let pipeline_id = active.pipeline_id.clone();
        self.inner.log.append(ClickRecord {
            record_id: 0,
            room_id: room_id.to_owned(),
            user_id: user_id.to_owned(),
            pipeline_id: pipeline_id.clone(),
            result_rank: rank,
            link: link.clone(),
            timestamp: self.now(),
        });
        state.send_to_user(
            user_id,
            &ServerEvent::ClickAck {
                pipeline_id,
                rank,
                link: link.clone(),
            },
        );
        Ok(link)
    }

    /// Waits until every agent job queued so far in the room has finished.
    pub async fn idle(&self, room_id: &str) -> Result<(), ServiceError> {
        let room = self.room(room_id)?;
        let (tx, rx) = oneshot::channel();
        let _ = room.jobs.send(Job::Barrier(tx));
        let _ = rx.await;
        Ok(())
    }

    /// Applies one client event on behalf of a connection. Failures come
    /// back as an `error` event on that connection only.
    pub fn handle_client_event(&self, room_id: &str, user_id: &str, connection_id: u64, event: ClientEvent) {
        let result = match event {
            ClientEvent::Join { .. } => Ok(()),
            ClientEvent::PostMessage { text } | ClientEvent::ClarificationReply { text } => {
                self.post_message(room_id, user_id, &text).map(drop)
            }
            ClientEvent::PageNav { direction } => self.page_nav(room_id, user_id, direction).map(drop),
            ClientEvent::Click { rank } => self.click(room_id, user_id, rank).map(drop),
        };
        if let Err(e) = result {
            self.send_error(room_id, connection_id, &e);
        }
    }

    pub(crate) fn send_error(&self, room_id: &str, connection_id: u64, error: &ServiceError) {
        let Ok(room) = self.room(room_id) else { return };
        let state = room.state.lock().expect("poisoned");
        if let Some(c) = state.connections.iter().find(|c| c.id == connection_id) {
            let _ = c.tx.send(ServerEvent::Error {
                code: error.code().to_owned(),
                message: error.to_string(),
            });
        }
    }
}

async fn worker(inner: Arc<Inner>, room: std::sync::Weak<RoomHandle>, mut jobs: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = jobs.recv().await {
        let Some(room) = room.upgrade() else { break };
        match job {
            Job::Barrier(done) => {
                let _ = done.send(());
            }
            Job::Mention {
                pipeline_id,
                user_id,
                utterance,
                done,
            } => {
                let history = history_before(&room, &utterance, false);
                let outcome = inner
                    .agent
                    .handle_mention_as(pipeline_id, &utterance.room_id, &user_id, &utterance.text, &history, &inner.config)
                    .await;
                apply(&inner, &room, &user_id, &outcome);
                let _ = done.send(outcome);
            }
            Job::Reply {
                user_id,
                utterance,
                done,
            } => {
                let history = history_before(&room, &utterance, true);
                let outcome = inner
                    .agent
                    .handle_reply(&utterance.room_id, &user_id, &history, &inner.config)
                    .await;
                apply(&inner, &room, &user_id, &outcome);
                let _ = done.send(outcome);
            }
        }
    }
}

/// Room history up to the given utterance, which is included on request.
fn history_before(room: &RoomHandle, utterance: &Utterance, inclusive: bool) -> Vec<Utterance> {
    let state = room.state.lock().expect("poisoned");
    let end = state
        .history
        .iter()
        .position(|u| u.id == utterance.id)
        .map_or(state.history.len(), |i| if inclusive { i + 1 } else { i });
    state.history[..end].to_vec()
}

/// Posts, logs and fans out what the agent produced.
fn apply(inner: &Inner, room: &RoomHandle, user_id: &str, outcome: &AgentOutcome) {
    let mut state = room.state.lock().expect("poisoned");
    let room_id = state.id.clone();
    let clock = inner.agent.clock();

    let agent_post = |state: &mut Room,
                          text: &str,
                          kind: ConversationKind,
                          pipeline_id: &str,
                          reasoning_trace: Option<String>|
     -> Utterance {
        let timestamp = clock.now_ms();
        let utterance = Utterance {
            id: state.next_utterance_id(),
            room_id: room_id.clone(),
            author_id: AGENT_ID.to_owned(),
            text: text.to_owned(),
            timestamp,
            is_agent: true,
        };
        state.history.push(utterance.clone());
        inner.log.append(BehaviorLogRecord::Conversation(ConversationRecord {
            record_id: 0,
            room_id: room_id.clone(),
            author_id: AGENT_ID.to_owned(),
            text: text.to_owned(),
            timestamp,
            kind,
            pipeline_id: Some(pipeline_id.to_owned()),
            reasoning_trace,
        }));
        utterance
    };

    match outcome {
        AgentOutcome::Ignored => {}
        AgentOutcome::Clarify {
            pipeline_id,
            question,
            plan,
        } => {
            let utterance = agent_post(
                &mut state,
                question,
                ConversationKind::AgentClarification,
                pipeline_id,
                plan.reasoning_trace.clone(),
            );
            state.broadcast(&ServerEvent::ClarifyingQuestion {
                pipeline_id: pipeline_id.clone(),
                asking_user_id: user_id.to_owned(),
                utterance,
            });
        }
        AgentOutcome::Failed(failure) => {
            let utterance = agent_post(
                &mut state,
                &failure.notice,
                ConversationKind::AgentError,
                &failure.pipeline_id,
                None,
            );
            state.broadcast(&ServerEvent::Message { utterance });
        }
        AgentOutcome::Answered(run) => {
            inner.log.append(SearchRecord {
                record_id: 0,
                room_id: room_id.clone(),
                user_id: user_id.to_owned(),
                pipeline_id: run.pipeline_id.clone(),
                action: SearchAction::Issued,
                effective_query: run.effective_query().to_owned(),
                page_index: 0,
                timestamp: clock.now_ms(),
            });
            if let (Some(answer), Some(rendered)) = (&run.answer, &run.rendered) {
                let utterance = agent_post(
                    &mut state,
                    rendered,
                    ConversationKind::AgentAnswer,
                    &run.pipeline_id,
                    run.plan.reasoning_trace.clone(),
                );
                state.broadcast(&ServerEvent::AgentAnswer {
                    pipeline_id: run.pipeline_id.clone(),
                    utterance,
                    answer: answer.clone(),
                });
            }
            let cards = run.cards();
            if cards.is_empty() {
                state.active = None;
                state.broadcast(&ServerEvent::ResultPage {
                    pipeline_id: run.pipeline_id.clone(),
                    effective_query: run.effective_query().to_owned(),
                    cards: Vec::new(),
                    page_index: 0,
                    page_count: 0,
                    total_cards: 0,
                });
            } else {
                state.active = Some(ActiveCards {
                    pipeline_id: run.pipeline_id.clone(),
                    effective_query: run.effective_query().to_owned(),
                    cards,
                    pages: HashMap::new(),
                });
                // Everyone starts on page 0 of a new set.
                if let Some(event) = state.page_event("", inner.config.page_size) {
                    state.broadcast(&event);
                }
            }
        }
    }
}
