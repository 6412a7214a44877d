//! Rewrites an incomplete question against the chat that preceded it.
//!
//! The model is scripted here so the example runs offline; swap in
//! `OpenAiCompatProvider::from_env` to use a real endpoint.

use std::sync::Arc;

use cosearch::llm::{LlmGateway, PlanOptions, ScriptRule, ScriptedProvider, Task};
use cosearch::model::{validate_context, Locale, Utterance};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let provider = ScriptedProvider::new(vec![
        ScriptRule::respond(
            Task::Rewrite,
            "```\nreasoning: \"it\" refers to Joy of Life season 2\ncomplete: no\nrewritten: lead actor of Joy of Life season 2\n```",
        ),
        ScriptRule::respond(Task::Clarify, "```\nambiguous: no\nquestion:\n```"),
    ]);
    let gateway = LlmGateway::new(Arc::new(provider));

    let chat = [
        ("alice", "Season 2 of Joy of Life just came out"),
        ("bob", "I watched the first episode yesterday"),
    ];
    let utterances: Vec<Utterance> = chat
        .iter()
        .enumerate()
        .map(|(i, (user, text))| Utterance::new(format!("room:{i}"), "room", *user, *text, i as i64, false))
        .collect::<Result<_, _>>()?;
    let context = validate_context(&utterances, 20);

    let plan = gateway
        .plan_query(&context, "who plays the lead in it?", Locale::En, PlanOptions::default())
        .await?;
    println!("original:  {}", plan.original);
    println!("rewritten: {}", plan.rewritten);
    println!("clarify:   {}", plan.needs_clarification);
    if let Some(trace) = &plan.reasoning_trace {
        println!("reasoning: {trace}");
    }
    Ok(())
}
