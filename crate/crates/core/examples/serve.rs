//! Runs the chat service over HTTP and WebSocket.
//!
//! ```text
//! cargo run --example serve                              # offline fixture config
//! cargo run --example serve -- fixtures/live.toml        # OpenAI + SerpAPI, keys from env
//! ```
//!
//! Then, for example:
//!
//! ```text
//! curl -XPOST localhost:8080/rooms -d '{"room_id":"demo"}' -H 'content-type: application/json'
//! websocat ws://localhost:8080/ws
//! {"type":"join","room_id":"demo","user_id":"alice"}
//! {"type":"post_message","text":"@CoSearchAgent who is the lead actor of Joy of Life season 2?"}
//! ```

use std::path::{Path, PathBuf};

use cosearch::service::{http, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/service.toml"));
    let config = ServiceConfig::load(&path)?;
    let service = config.build_service()?;
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, config = %path.display(), "listening");
    http::serve(service, listener).await?;
    Ok(())
}
