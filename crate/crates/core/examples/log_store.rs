//! Durable behavior logs: append to a JSONL store, reopen it, filter by
//! kind and time, and export every room as NDJSON.

use std::sync::Arc;

use cosearch::logs::{
    export_merged, write_ndjson, BehaviorLog, ClickRecord, ConversationKind, ConversationRecord, JsonlLogStore,
    LogFilter, LogKind, SearchAction, SearchRecord,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;

    {
        let log = BehaviorLog::new(Arc::new(JsonlLogStore::open(dir.path())?));
        log.append(ConversationRecord {
            record_id: 0,
            room_id: "room-1".into(),
            author_id: "alice".into(),
            text: "@CoSearchAgent solar panel efficiency".into(),
            timestamp: 1_000,
            kind: ConversationKind::UserMessage,
            pipeline_id: Some("room-1-1".into()),
            reasoning_trace: None,
        });
        log.append(SearchRecord {
            record_id: 0,
            room_id: "room-1".into(),
            user_id: "alice".into(),
            pipeline_id: "room-1-1".into(),
            action: SearchAction::Issued,
            effective_query: "solar panel efficiency".into(),
            page_index: 0,
            timestamp: 1_500,
        });
        log.append(ClickRecord {
            record_id: 0,
            room_id: "room-1".into(),
            user_id: "alice".into(),
            pipeline_id: "room-1-1".into(),
            result_rank: 2,
            link: "https://solar.example.com/04".into(),
            timestamp: 2_000,
        });
        log.flush();
    }

    // A fresh store over the same directory sees everything written above.
    let log = BehaviorLog::new(Arc::new(JsonlLogStore::open(dir.path())?));
    let clicks = log.scan("room-1", &LogFilter::kind(LogKind::Click))?;
    println!("clicks: {}", clicks.len());
    let early = LogFilter {
        to_ms: Some(1_600),
        ..LogFilter::default()
    };
    println!("records before t=1600: {}", log.scan("room-1", &early)?.len());

    let all = export_merged(log.store().as_ref())?;
    let mut out = std::io::stdout().lock();
    write_ndjson(&all, &mut out)?;
    Ok(())
}
