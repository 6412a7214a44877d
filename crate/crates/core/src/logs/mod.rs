//! Behavior logs: conversation, search navigation and clicks.
//!
//! Records are appended to a [`LogStore`], which assigns a per-room record
//! id that increases strictly with each append. [`BehaviorLog`] sits in front
//! of a store and buffers records while the store is unavailable.

mod jsonl;
mod memory;

use std::collections::VecDeque;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jsonl::JsonlLogStore;
pub use memory::MemoryLogStore;

pub const DEFAULT_BUFFER_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationKind {
    UserMessage,
    AgentAnswer,
    AgentClarification,
    AgentError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    #[serde(default)]
    pub record_id: u64,
    pub room_id: String,
    pub author_id: String,
    pub text: String,
    pub timestamp: i64,
    pub kind: ConversationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_id: Option<String>,
    /// Model reasoning behind an agent post. Stored here only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_trace: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchAction {
    Issued,
    PageNext,
    PagePrev,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRecord {
    #[serde(default)]
    pub record_id: u64,
    pub room_id: String,
    pub user_id: String,
    pub pipeline_id: String,
    pub action: SearchAction,
    pub effective_query: String,
    /// Page shown after the action, 0-based.
    pub page_index: usize,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    #[serde(default)]
    pub record_id: u64,
    pub room_id: String,
    pub user_id: String,
    pub pipeline_id: String,
    pub result_rank: usize,
    pub link: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Conversation,
    Search,
    Click,
}

/// One line of a log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "log", rename_all = "snake_case")]
pub enum BehaviorLogRecord {
    Conversation(ConversationRecord),
    Search(SearchRecord),
    Click(ClickRecord),
}

impl BehaviorLogRecord {
    pub fn kind(&self) -> LogKind {
        match self {
            BehaviorLogRecord::Conversation(_) => LogKind::Conversation,
            BehaviorLogRecord::Search(_) => LogKind::Search,
            BehaviorLogRecord::Click(_) => LogKind::Click,
        }
    }

    pub fn room_id(&self) -> &str {
        match self {
            BehaviorLogRecord::Conversation(r) => &r.room_id,
            BehaviorLogRecord::Search(r) => &r.room_id,
            BehaviorLogRecord::Click(r) => &r.room_id,
        }
    }

    pub fn timestamp(&self) -> i64 {
        match self {
            BehaviorLogRecord::Conversation(r) => r.timestamp,
            BehaviorLogRecord::Search(r) => r.timestamp,
            BehaviorLogRecord::Click(r) => r.timestamp,
        }
    }

    pub fn record_id(&self) -> u64 {
        match self {
            BehaviorLogRecord::Conversation(r) => r.record_id,
            BehaviorLogRecord::Search(r) => r.record_id,
            BehaviorLogRecord::Click(r) => r.record_id,
        }
    }

    pub fn pipeline_id(&self) -> Option<&str> {
        match self {
            BehaviorLogRecord::Conversation(r) => r.pipeline_id.as_deref(),
            BehaviorLogRecord::Search(r) => Some(&r.pipeline_id),
            BehaviorLogRecord::Click(r) => Some(&r.pipeline_id),
        }
    }

    pub(crate) fn set_record_id(&mut self, id: u64) {
        match self {
            BehaviorLogRecord::Conversation(r) => r.record_id = id,
            BehaviorLogRecord::Search(r) => r.record_id = id,
            BehaviorLogRecord::Click(r) => r.record_id = id,
        }
    }
}

impl From<ConversationRecord> for BehaviorLogRecord {
    fn from(r: ConversationRecord) -> Self {
        BehaviorLogRecord::Conversation(r)
    }
}

impl From<SearchRecord> for BehaviorLogRecord {
    fn from(r: SearchRecord) -> Self {
        BehaviorLogRecord::Search(r)
    }
}

impl From<ClickRecord> for BehaviorLogRecord {
    fn from(r: ClickRecord) -> Self {
        BehaviorLogRecord::Click(r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFilter {
    pub kind: Option<LogKind>,
    /// Inclusive lower bound on timestamp.
    pub from_ms: Option<i64>,
    /// Exclusive upper bound on timestamp.
    pub to_ms: Option<i64>,
}

impl LogFilter {
    pub fn kind(kind: LogKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn matches(&self, record: &BehaviorLogRecord) -> bool {
        let ts = record.timestamp();
        self.kind.is_none_or(|k| k == record.kind())
            && self.from_ms.is_none_or(|from| ts >= from)
            && self.to_ms.is_none_or(|to| ts < to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub record_id: u64,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("log storage unavailable: {0}")]
    Unavailable(String),
    #[error("log storage I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log record: {0}")]
    Corrupt(String),
}

/// Append-only record storage.
pub trait LogStore: Send + Sync {
    /// Assigns the record id, stores the record durably, then acknowledges.
    fn append(&self, record: BehaviorLogRecord) -> Result<Ack, StorageError>;

    /// Records of one room matching `filter`, in append order.
    fn scan(&self, room_id: &str, filter: &LogFilter) -> Result<Vec<BehaviorLogRecord>, StorageError>;

    fn rooms(&self) -> Result<Vec<String>, StorageError>;
}

/// All rooms merged into one stream ordered by timestamp, then room, then
/// record id.
pub fn export_merged(store: &dyn LogStore) -> Result<Vec<BehaviorLogRecord>, StorageError> {
    let mut all = Vec::new();
    for room in store.rooms()? {
        all.extend(store.scan(&room, &LogFilter::default())?);
    }
    all.sort_by(|a, b| {
        a.timestamp()
            .cmp(&b.timestamp())
            .then_with(|| a.room_id().cmp(b.room_id()))
            .then_with(|| a.record_id().cmp(&b.record_id()))
    });
    Ok(all)
}

/// Newline-delimited canonical JSON.
pub fn write_ndjson<'a>(
    records: impl IntoIterator<Item = &'a BehaviorLogRecord>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Stored(Ack),
    /// Held in memory until the store accepts appends again.
    Buffered,
}

/// Front for a [`LogStore`] that queues records while the store is down.
///
/// Queued records are retried, in order, before every later append. When
/// the queue is full the oldest record is dropped with a diagnostic on
/// stderr.
pub struct BehaviorLog {
    store: Arc<dyn LogStore>,
    pending: Mutex<VecDeque<BehaviorLogRecord>>,
    capacity: usize,
}

impl BehaviorLog {
    pub fn new(store: Arc<dyn LogStore>) -> Self {
        Self::with_capacity(store, DEFAULT_BUFFER_CAPACITY)
    }

    pub fn with_capacity(store: Arc<dyn LogStore>, capacity: usize) -> Self {
        Self {
            store,
            pending: Mutex::new(VecDeque::new()),
            capacity: capacity.max(1),
        }
    }

    pub fn store(&self) -> &Arc<dyn LogStore> {
        &self.store
    }

    pub fn pending(&self) -> usize {
        self.pending.lock().expect("poisoned").len()
    }

    fn drain(&self, pending: &mut VecDeque<BehaviorLogRecord>) -> bool {
        while let Some(record) = pending.pop_front() {
            if let Err(e) = self.store.append(record.clone()) {
                tracing::debug!(error = %e, "log store still unavailable");
                pending.push_front(record);
                return false;
            }
        }
        true
    }

    pub fn append(&self, record: impl Into<BehaviorLogRecord>) -> AppendOutcome {
        let record = record.into();
        let mut pending = self.pending.lock().expect("poisoned");
        if self.drain(&mut pending) {
            match self.store.append(record.clone()) {
                Ok(ack) => return AppendOutcome::Stored(ack),
                Err(e) => tracing::warn!(error = %e, "log append failed, buffering"),
            }
        }
        if pending.len() >= self.capacity {
            if let Some(dropped) = pending.pop_front() {
                eprintln!(
                    "cosearch: log buffer full ({} records), dropping oldest {:?} record from room {}",
                    self.capacity,
                    dropped.kind(),
                    dropped.room_id()
                );
            }
        }
        pending.push_back(record);
        AppendOutcome::Buffered
    }

    /// Retries queued records. Returns true once the queue is empty.
    pub fn flush(&self) -> bool {
        let mut pending = self.pending.lock().expect("poisoned");
        self.drain(&mut pending)
    }

    pub fn scan(&self, room_id: &str, filter: &LogFilter) -> Result<Vec<BehaviorLogRecord>, StorageError> {
        self.store.scan(room_id, filter)
    }
}
