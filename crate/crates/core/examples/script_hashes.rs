//! Pins a scenario's model replies to exact inputs.
//!
//! Runs the scenario's full-agent mode with a recording provider, then
//! prints one rule per model call keyed on the call's input hash. Pasting
//! the output into the scenario's `script` makes any drift in the prompt
//! variables fail loudly as an unscripted request.
//!
//! ```text
//! cargo run --example script_hashes -- fixtures/scenarios/solar-filtering.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cosearch::llm::{LlmGateway, LlmProvider, RecordingProvider, ScriptRule, ScriptedProvider};
use cosearch::orchestrator::{Agent, Mode, ModeRequest};
use cosearch::page::CorpusFetcher;
use cosearch::replay::{scenario_config, ScenarioFile, DEFAULT_CLOCK_START};
use cosearch::search::{Corpus, CorpusIndex};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios/joy-of-life.json"));
    let file = ScenarioFile::load(&path)?;
    let scenario = &file.scenario;

    let scripted = Arc::new(ScriptedProvider::new(scenario.script.clone()));
    let recorder = Arc::new(RecordingProvider::new(scripted.clone()));
    let corpus = Arc::new(Corpus::load(&file.web_corpus_dir())?);
    let agent = Agent::new(
        LlmGateway::new(recorder.clone()),
        Arc::new(CorpusIndex::new(corpus.clone())),
        Arc::new(CorpusFetcher::new(corpus)),
    );

    let config = scenario_config(&file, &Default::default(), Mode::FullAgent)?;
    let transcript = scenario.utterances(scenario.clock_start.unwrap_or(DEFAULT_CLOCK_START));
    agent
        .run_mode(
            ModeRequest {
                transcript: &transcript,
                room_id: &scenario.room_id,
                user_id: &scenario.user_id,
                query: &scenario.query,
                human_rewrite: scenario.human_rewrite.as_deref(),
                clarification_reply: scenario.clarification_reply.as_deref(),
            },
            &config,
        )
        .await?;

    let mut pinned = Vec::new();
    for request in recorder.requests() {
        let mut rule = ScriptRule {
            input_hash: Some(request.input_hash()),
            ..ScriptRule::respond(request.task, "")
        };
        match scripted.complete(&request).await {
            Ok(text) => rule.response = Some(text),
            Err(e) => {
                rule.response = None;
                rule.error = Some(e.kind);
            }
        }
        pinned.push(rule);
    }
    println!("{}", serde_json::to_string_pretty(&pinned)?);
    Ok(())
}
