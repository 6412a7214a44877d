//! One agent turn outside any chat service: a mention goes in, a cited
//! answer and its reference cards come out.

use std::path::Path;
use std::sync::Arc;

use cosearch::llm::{LlmGateway, ScriptedProvider};
use cosearch::model::Utterance;
use cosearch::orchestrator::{Agent, AgentOutcome, PipelineConfig};
use cosearch::page::CorpusFetcher;
use cosearch::search::{Corpus, CorpusIndex};
use cosearch::service::load_script;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = Arc::new(Corpus::load(&fixtures.join("web"))?);
    let script = load_script(&fixtures.join("service-script.json"))?;
    let agent = Agent::new(
        LlmGateway::new(Arc::new(ScriptedProvider::new(script))),
        Arc::new(CorpusIndex::new(corpus.clone())),
        Arc::new(CorpusFetcher::new(corpus)),
    );

    let history = vec![
        Utterance::new("fig:1", "fig", "alice", "Joy of Life season 2 is finally out!", 1, false)?,
        Utterance::new("fig:2", "fig", "carol", "@CoSearchAgent who is the lead actor?", 2, false)?,
    ];
    let outcome = agent
        .handle_mention("fig", "carol", &history[1].text, &history, &PipelineConfig::default())
        .await;

    match outcome {
        AgentOutcome::Answered(run) => {
            println!("pipeline {}: searched {:?}", run.pipeline_id, run.effective_query());
            for card in run.cards() {
                println!("  [{}] {} ({})", card.rank, card.title, card.reference);
            }
            println!("\n{}", run.rendered.unwrap_or_default());
        }
        AgentOutcome::Clarify { question, .. } => println!("agent asks: {question}"),
        AgentOutcome::Failed(failure) => println!("failed: {}", failure.notice),
        AgentOutcome::Ignored => println!("ignored"),
    }
    Ok(())
}
