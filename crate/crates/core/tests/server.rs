//! End-to-end over a real socket: HTTP room management, the WebSocket
//! event protocol, and the NDJSON log export.

use std::path::Path;
use std::time::Duration;

use cosearch::logs::{BehaviorLogRecord, SearchAction};
use cosearch::service::{http, ServerEvent, ServiceConfig};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(page_size: usize) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/service.toml");
    let mut config = ServiceConfig::load(&path).unwrap();
    config.pipeline.page_size = page_size;
    let service = config.build_service().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(http::serve(service, listener));
    format!("{addr}")
}

async fn socket(addr: &str) -> Socket {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws
}

async fn send(ws: &mut Socket, event: Value) {
    ws.send(Message::Text(event.to_string().into())).await.unwrap();
}

async fn recv(ws: &mut Socket) -> ServerEvent {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("timed out waiting for an event")
            .expect("socket closed")
            .unwrap();
        if let Message::Text(text) = frame {
            return serde_json::from_str(&text).unwrap();
        }
    }
}

async fn join(addr: &str, room: &str, user: &str) -> Socket {
    let mut ws = socket(addr).await;
    send(&mut ws, json!({"type": "join", "room_id": room, "user_id": user})).await;
    assert!(matches!(recv(&mut ws).await, ServerEvent::Joined { .. }));
    assert!(matches!(recv(&mut ws).await, ServerEvent::History { .. }));
    ws
}

#[tokio::test]
async fn rooms_messages_paging_clicks_and_export() {
    let addr = start(2).await;
    let client = reqwest::Client::new();
    let base = format!("http://{addr}");

    let created = client.post(format!("{base}/rooms")).json(&json!({"room_id": "fig3"})).send().await.unwrap();
    assert_eq!(created.status(), 201);
    assert_eq!(created.json::<Value>().await.unwrap()["room_id"], "fig3");
    let again = client.post(format!("{base}/rooms")).json(&json!({"room_id": "fig3"})).send().await.unwrap();
    assert_eq!(again.status(), 409);
    assert_eq!(again.json::<Value>().await.unwrap()["code"], "room_exists");
    for user in ["alice", "bob"] {
        let joined = client
            .post(format!("{base}/rooms/fig3/join"))
            .json(&json!({"user_id": user}))
            .send()
            .await
            .unwrap();
        assert_eq!(joined.status(), 200);
    }
    let rooms: Vec<String> = client.get(format!("{base}/rooms")).send().await.unwrap().json().await.unwrap();
    assert_eq!(rooms, ["fig3"]);

    let mut alice = join(&addr, "fig3", "alice").await;
    let mut bob = join(&addr, "fig3", "bob").await;

    send(&mut alice, json!({"type": "post_message", "text": "Joy of Life season 2 is out"})).await;
    for ws in [&mut alice, &mut bob] {
        let ServerEvent::Message { utterance } = recv(ws).await else { panic!("expected message") };
        assert_eq!(utterance.author_id, "alice");
    }

    // Posting over HTTP fans out to the sockets like any other post.
    let posted: Value = client
        .post(format!("{base}/rooms/fig3/messages"))
        .json(&json!({"user_id": "bob", "text": "@CoSearchAgent who is the lead actor?"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(posted["pipeline_id"], "fig3-1");

    for ws in [&mut alice, &mut bob] {
        assert!(matches!(recv(ws).await, ServerEvent::Message { .. }));
        let ServerEvent::AgentAnswer { pipeline_id, utterance, answer } = recv(ws).await else {
            panic!("expected agent_answer")
        };
        assert_eq!(pipeline_id, "fig3-1");
        assert!(utterance.is_agent);
        assert_eq!(answer.cited_ranks(), vec![1, 2]);
        let ServerEvent::ResultPage { page_index, page_count, cards, total_cards, .. } = recv(ws).await else {
            panic!("expected result_page")
        };
        assert_eq!((page_index, page_count, total_cards, cards.len()), (0, 2, 3, 2));
    }

    // Paging is per user: only bob moves, and the second press is clamped.
    send(&mut bob, json!({"type": "page_nav", "direction": "next"})).await;
    let ServerEvent::ResultPage { page_index, cards, .. } = recv(&mut bob).await else { panic!() };
    assert_eq!(page_index, 1);
    assert_eq!(cards.iter().map(|c| c.rank).collect::<Vec<_>>(), [3]);
    send(&mut bob, json!({"type": "page_nav", "direction": "next"})).await;
    let ServerEvent::ResultPage { page_index, .. } = recv(&mut bob).await else { panic!() };
    assert_eq!(page_index, 1);

    send(&mut bob, json!({"type": "click", "rank": 3})).await;
    let ServerEvent::ClickAck { rank, link, pipeline_id } = recv(&mut bob).await else { panic!() };
    assert_eq!((rank, pipeline_id.as_str()), (3, "fig3-1"));
    assert!(link.starts_with("https://"));
    send(&mut bob, json!({"type": "click", "rank": 9})).await;
    let ServerEvent::Error { code, .. } = recv(&mut bob).await else { panic!() };
    assert_eq!(code, "unknown_rank");
    send(&mut bob, json!({"type": "nonsense"})).await;
    let ServerEvent::Error { code, .. } = recv(&mut bob).await else { panic!() };
    assert_eq!(code, "bad_request");

    // Alice saw none of bob's private traffic; her next event is her own.
    send(&mut alice, json!({"type": "page_nav", "direction": "prev"})).await;
    let ServerEvent::ResultPage { page_index, .. } = recv(&mut alice).await else { panic!() };
    assert_eq!(page_index, 0);

    let history: Vec<Value> = client.get(format!("{base}/rooms/fig3/history")).send().await.unwrap().json().await.unwrap();
    assert_eq!(history.len(), 3);
    assert_eq!(history[2]["author_id"], "cosearch-agent");

    let export = client.get(format!("{base}/logs/export")).send().await.unwrap();
    assert_eq!(export.headers()["content-type"], "application/x-ndjson");
    let body = export.text().await.unwrap();
    let records: Vec<BehaviorLogRecord> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let conversations = records.iter().filter(|r| matches!(r, BehaviorLogRecord::Conversation(_))).count();
    let navs = records
        .iter()
        .filter(|r| matches!(r, BehaviorLogRecord::Search(s) if s.action == SearchAction::PageNext))
        .count();
    let clicks = records.iter().filter(|r| matches!(r, BehaviorLogRecord::Click(_))).count();
    assert_eq!((conversations, navs, clicks), (3, 1, 1));
}

#[tokio::test]
async fn http_errors_map_to_status_codes() {
    let addr = start(3).await;
    let client = reqwest::Client::new();
    let base = format!("http://{addr}");

    let missing = client.get(format!("{base}/rooms/nope/history")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
    assert_eq!(missing.json::<Value>().await.unwrap()["code"], "unknown_room");

    let auto: Value = client.post(format!("{base}/rooms")).send().await.unwrap().json().await.unwrap();
    let room = auto["room_id"].as_str().unwrap().to_owned();
    let stranger = client
        .post(format!("{base}/rooms/{room}/messages"))
        .json(&json!({"user_id": "mallory", "text": "hi"}))
        .send()
        .await
        .unwrap();
    assert_eq!(stranger.status(), 403);

    client
        .post(format!("{base}/rooms/{room}/join"))
        .json(&json!({"user_id": "alice"}))
        .send()
        .await
        .unwrap();
    let empty = client
        .post(format!("{base}/rooms/{room}/messages"))
        .json(&json!({"user_id": "alice", "text": "   "}))
        .send()
        .await
        .unwrap();
    assert_eq!(empty.status(), 400);
}

#[tokio::test]
async fn socket_must_join_first() {
    let addr = start(3).await;
    let mut ws = socket(&addr).await;

    send(&mut ws, json!({"type": "post_message", "text": "hello"})).await;
    let ServerEvent::Error { code, .. } = recv(&mut ws).await else { panic!() };
    assert_eq!(code, "bad_request");

    send(&mut ws, json!({"type": "join", "room_id": "nowhere", "user_id": "alice"})).await;
    let ServerEvent::Error { code, .. } = recv(&mut ws).await else { panic!() };
    assert_eq!(code, "unknown_room");

    send(&mut ws, json!({"type": "page_nav", "direction": "next"})).await;
    let ServerEvent::Error { code, .. } = recv(&mut ws).await else { panic!() };
    assert_eq!(code, "bad_request");
}
