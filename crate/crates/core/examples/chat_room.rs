//! Two people in one room: a mention, a clarifying question, the answer,
//! result paging and a click, then the behavior log for the room.

use std::path::Path;
use std::sync::Arc;

use cosearch::logs::{BehaviorLog, LogFilter, MemoryLogStore};
use cosearch::service::{Direction, ServerEvent, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ServiceConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/service.toml"))?;
    let agent = Arc::new(config.build_agent()?);
    let log = Arc::new(BehaviorLog::new(Arc::new(MemoryLogStore::new())));
    let service = cosearch::service::ChatService::new(agent, log.clone(), config.pipeline.clone())?;

    let room = service.create_room(Some("demo"))?;
    service.join(&room, "alice")?;
    service.join(&room, "bob")?;
    let mut bob = service.connect(&room, "bob")?;

    service.post_message(&room, "alice", "Joy of Life season 2 is out")?;
    let posted = service.post_message(&room, "bob", "@CoSearchAgent is that one worth reading?")?;
    posted.ticket.outcome().await;
    let posted = service.post_message(&room, "bob", "the novel")?;
    posted.ticket.outcome().await;

    while let Ok(event) = bob.events.try_recv() {
        match event {
            ServerEvent::Message { utterance } => println!("{:>14}: {}", utterance.author_id, utterance.text),
            ServerEvent::ClarifyingQuestion { utterance, asking_user_id, .. } => {
                println!("{:>14}: {} (to {asking_user_id})", utterance.author_id, utterance.text)
            }
            ServerEvent::AgentAnswer { utterance, .. } => println!("{:>14}: {}", utterance.author_id, utterance.text),
            ServerEvent::ResultPage { page_index, page_count, cards, .. } => {
                println!("{:>14}  page {}/{}, {} cards", "", page_index + 1, page_count, cards.len())
            }
            _ => {}
        }
    }

    let view = service.page_nav(&room, "bob", Direction::Next)?;
    println!("bob pages to {}/{}", view.page_index + 1, view.page_count);
    let link = service.click(&room, "bob", 1)?;
    println!("bob opens {link}");

    log.flush();
    println!("\nbehavior log for {room}:");
    for record in log.scan(&room, &LogFilter::default())? {
        println!("  {}", serde_json::to_string(&record)?);
    }
    Ok(())
}
