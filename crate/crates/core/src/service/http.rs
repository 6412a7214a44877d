//! HTTP and WebSocket front end.
//!
//! | method | path | body | reply |
//! |--------|------|------|-------|
//! | POST | `/rooms` | `{"room_id"?}` | 201 `{"room_id"}` |
//! | GET | `/rooms` | | `["room-1", ...]` |
//! | POST | `/rooms/{room}/join` | `{"user_id"}` | `{"room_id","user_id"}` |
//! | GET | `/rooms/{room}/history` | | `[Utterance]` |
//! | POST | `/rooms/{room}/messages` | `{"user_id","text"}` | `{"utterance","pipeline_id"}` |
//! | GET | `/logs/export` | | NDJSON, all rooms merged by time |
//! | GET | `/ws` | | WebSocket; first frame must be `join` |
//!
//! Errors are `{"code","message"}` with the status picked by [`status_for`].

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatService, ClientEvent, ServerEvent, ServiceError};
use crate::logs::{export_merged, write_ndjson};
use crate::model::Utterance;

pub fn status_for(error: &ServiceError) -> StatusCode {
    match error {
        ServiceError::UnknownRoom(_) | ServiceError::UnknownRank { .. } => StatusCode::NOT_FOUND,
        ServiceError::RoomExists(_) | ServiceError::NoActiveResults => StatusCode::CONFLICT,
        ServiceError::NotAMember { .. } => StatusCode::FORBIDDEN,
        ServiceError::EmptyMessage | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.0.code(), "message": self.0.to_string() });
        (status_for(&self.0), Json(body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateRoom {
    room_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Membership {
    #[serde(default)]
    room_id: String,
    user_id: String,
}

#[derive(Debug, Deserialize)]
struct NewMessage {
    user_id: String,
    text: String,
}

#[derive(Debug, Serialize)]
struct PostedMessage {
    utterance: Utterance,
    pipeline_id: Option<String>,
}

pub fn router(service: ChatService) -> Router {
    Router::new()
        .route("/rooms", post(create_room).get(list_rooms))
        .route("/rooms/{room}/join", post(join_room))
        .route("/rooms/{room}/history", get(history))
        .route("/rooms/{room}/messages", post(post_message))
        .route("/logs/export", get(export_logs))
        .route("/ws", get(upgrade))
        .with_state(service)
}

/// Serves until the listener fails.
pub async fn serve(service: ChatService, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

async fn create_room(
    State(service): State<ChatService>,
    body: Option<Json<CreateRoom>>,
) -> Result<impl IntoResponse, ApiError> {
    let request = body.map(|Json(b)| b).unwrap_or_default();
    let room_id = service.create_room(request.room_id.as_deref())?;
    Ok((StatusCode::CREATED, Json(json!({ "room_id": room_id }))))
}

async fn list_rooms(State(service): State<ChatService>) -> Json<Vec<String>> {
    Json(service.rooms())
}

async fn join_room(
    State(service): State<ChatService>,
    Path(room): Path<String>,
    Json(body): Json<Membership>,
) -> Result<Json<Membership>, ApiError> {
    service.join(&room, &body.user_id)?;
    Ok(Json(Membership {
        room_id: room,
        user_id: body.user_id,
    }))
}

async fn history(State(service): State<ChatService>, Path(room): Path<String>) -> Result<Json<Vec<Utterance>>, ApiError> {
    Ok(Json(service.history(&room)?))
}

async fn post_message(
    State(service): State<ChatService>,
    Path(room): Path<String>,
    Json(body): Json<NewMessage>,
) -> Result<Json<PostedMessage>, ApiError> {
    let posted = service.post_message(&room, &body.user_id, &body.text)?;
    Ok(Json(PostedMessage {
        utterance: posted.utterance,
        pipeline_id: posted.pipeline_id,
    }))
}

async fn export_logs(State(service): State<ChatService>) -> Response {
    let store = service.log().store().clone();
    let records = match export_merged(store.as_ref()) {
        Ok(records) => records,
        Err(e) => {
            let body = json!({ "code": "storage", "message": e.to_string() });
            return (StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response();
        }
    };
    let mut out = Vec::new();
    write_ndjson(&records, &mut out).expect("writing to memory");
    ([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response()
}

async fn upgrade(State(service): State<ChatService>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| session(service, socket))
}

fn frame(event: &ServerEvent) -> Message {
    Message::Text(serde_json::to_string(event).expect("event serializes").into())
}

fn error_frame(error: &ServiceError) -> Message {
    frame(&ServerEvent::Error {
        code: error.code().to_owned(),
        message: error.to_string(),
    })
}

async fn session(service: ChatService, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();

    // Until a successful join, errors are written directly.
    let (room_id, user_id, subscription) = loop {
        let Some(Ok(message)) = stream.next().await else { return };
        let text = match message {
            Message::Text(text) => text,
            Message::Close(_) => return,
            _ => continue,
        };
        let error = match serde_json::from_str::<ClientEvent>(&text) {
            Ok(ClientEvent::Join { room_id, user_id }) => match service.connect(&room_id, &user_id) {
                Ok(sub) => break (room_id, user_id, sub),
                Err(e) => e,
            },
            Ok(_) => ServiceError::BadRequest("send `join` first".into()),
            Err(e) => ServiceError::BadRequest(e.to_string()),
        };
        if sink.send(error_frame(&error)).await.is_err() {
            return;
        }
    };

    let connection_id = subscription.connection_id;
    let mut events = subscription.events;
    let forward = tokio::spawn(async move {
        while let Some(event) = events.recv().await {
            if sink.send(frame(&event)).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(message)) = stream.next().await {
        let text = match message {
            Message::Text(text) => text,
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<ClientEvent>(&text) {
            Ok(event) => service.handle_client_event(&room_id, &user_id, connection_id, event),
            Err(e) => service.send_error(&room_id, connection_id, &ServiceError::BadRequest(e.to_string())),
        }
    }
    service.disconnect(&room_id, connection_id);
    forward.abort();
}
