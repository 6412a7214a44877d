//! File-backed log store.
//!
//! Layout under the store directory:
//!
//! - `index.json`: `{"rooms": {"<room id>": "<file name>"}}`;
//! - one `<file name>.jsonl` per room, one canonical JSON record per line,
//!   UTF-8, `\n`-terminated.
//!
//! File names are the room id with every byte outside `[A-Za-z0-9_-]`
//! written as `%XX`. Each append is flushed and synced before it is
//! acknowledged unless syncing is turned off.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Ack, BehaviorLogRecord, LogFilter, LogStore, StorageError};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    rooms: BTreeMap<String, String>,
}

struct RoomFile {
    file: File,
    next_id: u64,
}

struct State {
    index: Index,
    open: BTreeMap<String, RoomFile>,
}

pub struct JsonlLogStore {
    dir: PathBuf,
    sync: bool,
    state: Mutex<State>,
}

pub(crate) fn file_stem(room_id: &str) -> String {
    let mut out = String::new();
    for b in room_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push('%');
    }
    out
}

fn read_records(path: &Path) -> Result<Vec<BehaviorLogRecord>, StorageError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => records.push(record),
            // A torn final write from a crash.
            Err(e) if e.is_eof() => tracing::warn!(path = %path.display(), line = i + 1, "skipping truncated record"),
            Err(e) => return Err(StorageError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(records)
}

impl JsonlLogStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let index_path = dir.join(INDEX_FILE);
        let index = match std::fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| StorageError::Corrupt(format!("{}: {e}", index_path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            dir,
            sync: true,
            state: Mutex::new(State {
                index,
                open: BTreeMap::new(),
            }),
        })
    }

    /// Skips fsync on append. Records still reach the OS before the ack.
    pub fn without_sync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn room_path(&self, file: &str) -> PathBuf {
        self.dir.join(format!("{file}.jsonl"))
    }

    fn write_index(&self, index: &Index) -> Result<(), StorageError> {
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        let body = serde_json::to_vec_pretty(index).map_err(|e| StorageError::Corrupt(e.to_string()))?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }
}

impl LogStore for JsonlLogStore {
    fn append(&self, mut record: BehaviorLogRecord) -> Result<Ack, StorageError> {
        let mut state = self.state.lock().expect("poisoned");
        let room_id = record.room_id().to_owned();
        if !state.index.rooms.contains_key(&room_id) {
            state.index.rooms.insert(room_id.clone(), file_stem(&room_id));
            if let Err(e) = self.write_index(&state.index) {
                state.index.rooms.remove(&room_id);
                return Err(e);
            }
        }
        if !state.open.contains_key(&room_id) {
            let path = self.room_path(&state.index.rooms[&room_id]);
            let next_id = read_records(&path)?.last().map_or(1, |r| r.record_id() + 1);
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            state.open.insert(room_id.clone(), RoomFile { file, next_id });
        }
        let room = state.open.get_mut(&room_id).expect("opened above");
        record.set_record_id(room.next_id);
        let mut line = serde_json::to_vec(&record).map_err(|e| StorageError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        room.file.write_all(&line)?;
        room.file.flush()?;
        if self.sync {
            room.file.sync_data()?;
        }
        let ack = Ack {
            record_id: room.next_id,
        };
        room.next_id += 1;
        Ok(ack)
    }

    fn scan(&self, room_id: &str, filter: &LogFilter) -> Result<Vec<BehaviorLogRecord>, StorageError> {
        let path = {
            let state = self.state.lock().expect("poisoned");
            match state.index.rooms.get(room_id) {
                Some(file) => self.room_path(file),
                None => return Ok(Vec::new()),
            }
        };
        Ok(read_records(&path)?.into_iter().filter(|r| filter.matches(r)).collect())
    }

    fn rooms(&self) -> Result<Vec<String>, StorageError> {
        Ok(self.state.lock().expect("poisoned").index.rooms.keys().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logs::tests::{click, conversation};
    use crate::logs::LogKind;

    #[test]
    fn file_names_are_escaped() {
        assert_eq!(file_stem("room-1_a"), "room-1_a");
        assert_eq!(file_stem("../x y"), "%2E%2E%2Fx%20y");
        assert_eq!(file_stem(""), "%");
    }

    #[test]
    fn appends_are_scanned_in_order_with_increasing_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = JsonlLogStore::open(dir.path()).unwrap();
        let acks: Vec<_> = [conversation("r", 1, "a"), click("r", 2), conversation("r", 3, "b")]
            .into_iter()
            .map(|rec| store.append(rec).unwrap().record_id)
            .collect();
        assert_eq!(acks, vec![1, 2, 3]);
        let all = store.scan("r", &LogFilter::default()).unwrap();
        assert_eq!(all.iter().map(|r| r.record_id()).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(store.scan("r", &LogFilter::kind(LogKind::Click)).unwrap().len(), 1);
        let none = LogFilter {
            from_ms: Some(100),
            ..LogFilter::default()
        };
        assert!(store.scan("r", &none).unwrap().is_empty());
        assert!(store.scan("unknown", &LogFilter::default()).unwrap().is_empty());
    }

    #[test]
    fn reopening_continues_ids_and_keeps_rooms() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = JsonlLogStore::open(dir.path()).unwrap().without_sync();
            store.append(conversation("room/1", 1, "a")).unwrap();
            store.append(conversation("room/1", 2, "b")).unwrap();
        }
        let store = JsonlLogStore::open(dir.path()).unwrap();
        assert_eq!(store.rooms().unwrap(), vec!["room/1".to_string()]);
        assert_eq!(store.append(click("room/1", 3)).unwrap().record_id, 3);
        assert!(dir.path().join("room%2F1.jsonl").exists());
    }

    #[test]
    fn truncated_tail_is_skipped_but_garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let store = JsonlLogStore::open(dir.path()).unwrap();
        store.append(conversation("r", 1, "a")).unwrap();
        let path = dir.path().join("r.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"log":"click","record_id":2"#).unwrap();
        assert_eq!(store.scan("r", &LogFilter::default()).unwrap().len(), 1);

        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(store.scan("r", &LogFilter::default()), Err(StorageError::Corrupt(_))));
    }
}
