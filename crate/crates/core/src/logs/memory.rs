use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use super::{Ack, BehaviorLogRecord, LogFilter, LogStore, StorageError};

/// Volatile store for tests and replays. Can be switched off to simulate an
/// outage.
#[derive(Debug)]
pub struct MemoryLogStore {
    rooms: Mutex<BTreeMap<String, Vec<BehaviorLogRecord>>>,
    available: AtomicBool,
}

impl Default for MemoryLogStore {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryLogStore {
    pub fn new() -> Self {
        Self {
            rooms: Mutex::new(BTreeMap::new()),
            available: AtomicBool::new(true),
        }
    }

    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    fn check(&self) -> Result<(), StorageError> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(StorageError::Unavailable("memory store switched off".into()))
        }
    }
}

impl LogStore for MemoryLogStore {
    fn append(&self, mut record: BehaviorLogRecord) -> Result<Ack, StorageError> {
        self.check()?;
        let mut rooms = self.rooms.lock().expect("poisoned");
        let records = rooms.entry(record.room_id().to_owned()).or_default();
        let record_id = records.last().map_or(1, |r| r.record_id() + 1);
        record.set_record_id(record_id);
        records.push(record);
        Ok(Ack { record_id })
    }

    fn scan(&self, room_id: &str, filter: &LogFilter) -> Result<Vec<BehaviorLogRecord>, StorageError> {
        self.check()?;
        let rooms = self.rooms.lock().expect("poisoned");
        Ok(rooms
            .get(room_id)
            .map(|records| records.iter().filter(|r| filter.matches(r)).cloned().collect())
            .unwrap_or_default())
    }

    fn rooms(&self) -> Result<Vec<String>, StorageError> {
        self.check()?;
        Ok(self.rooms.lock().expect("poisoned").keys().cloned().collect())
    }
}
