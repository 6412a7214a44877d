//! Replays one recorded scenario through all four pipeline modes and diffs
//! each mode against the full agent.
//!
//! ```text
//! cargo run --example compare_modes -- fixtures/scenarios/qingyunian-clarify.json
//! ```

use std::path::{Path, PathBuf};

use cosearch::orchestrator::Mode;
use cosearch::replay::{diff_reports, replay_scenario, ReplayOptions, ScenarioFile};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios/joy-of-life.json"));
    let file = ScenarioFile::load(&path)?;
    let options = ReplayOptions::default();

    let mut reports = Vec::new();
    for mode in Mode::ALL {
        let report = replay_scenario(&file, mode, &options).await?;
        println!(
            "mode {} {:<20} query {:?}, {} results, {} cards",
            mode.number(),
            mode.name(),
            report.effective_query,
            report.results.len(),
            report.cards.len()
        );
        reports.push(report);
    }

    let full = reports.last().expect("four modes ran");
    for report in &reports[..reports.len() - 1] {
        let diff = diff_reports(report, full)?;
        println!("\nmode {} vs mode 4:", report.mode.number());
        if diff.is_empty() {
            println!("  identical");
        } else {
            print!("{diff}");
        }
    }
    Ok(())
}
