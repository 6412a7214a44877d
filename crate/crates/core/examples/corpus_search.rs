//! Searches the bundled offline web corpus, the stand-in for a live search
//! API in tests and replays.

use std::path::Path;
use std::sync::Arc;

use cosearch::search::{Corpus, CorpusIndex, SearchProvider};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/web");
    let corpus = Arc::new(Corpus::load(&dir)?);
    println!("{} documents in {}", corpus.len(), dir.display());

    let index = CorpusIndex::new(corpus);
    let query = std::env::args().nth(1).unwrap_or_else(|| "solar panel efficiency".into());
    let results = index.search(&query, 10).await?;
    println!("query: {query}");
    for entry in results {
        println!("{:>2}. {}  <{}>", entry.rank, entry.title, entry.link);
    }
    Ok(())
}
