//! Replays scenario files through the four result-returning modes.
//!
//! ```text
//! cosearch-replay --corpus fixtures/scenarios --mode all --out out
//! cosearch-replay --diff out/joy-of-life.mode3.json out/joy-of-life.mode4.json
//! ```

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cosearch::orchestrator::{Mode, ModeReport};
use cosearch::replay::{diff_reports, load_corpus, replay_all, write_reports, ReplayOptions, DEFAULT_CLOCK_START};
use cosearch::service::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "cosearch-replay", version, about)]
struct Args {
    /// Directory of scenario files.
    #[arg(long, required_unless_present = "diff")]
    corpus: Option<PathBuf>,
    /// 1-4, a mode name, or `all`.
    #[arg(long, default_value = "all")]
    mode: String,
    /// Service config; its `[pipeline]` table is the base for every scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the providers from the config instead of scenario scripts.
    #[arg(long)]
    live: bool,
    /// Clock start (epoch ms) for scenarios that do not set one.
    #[arg(long, value_name = "EPOCH_MS", default_value_t = DEFAULT_CLOCK_START)]
    seed_clock: i64,
    /// Compare two reports instead of replaying.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "corpus")]
    diff: Option<Vec<PathBuf>>,
}

/// Like `println!`, but a closed stdout (e.g. `| head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn read_report(path: &PathBuf) -> Result<ModeReport, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn diff(paths: &[PathBuf]) -> Result<(), String> {
    let (a, b) = (read_report(&paths[0])?, read_report(&paths[1])?);
    let diff = diff_reports(&a, &b).map_err(|e| e.to_string())?;
    let _ = write!(std::io::stdout().lock(), "{diff}");
    Ok(())
}

async fn replay(args: Args) -> Result<bool, String> {
    let modes = match args.mode.as_str() {
        "all" => Mode::ALL.to_vec(),
        other => vec![other.parse::<Mode>()?],
    };
    let config = match &args.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| e.to_string())?,
        None => ServiceConfig::default(),
    };
    let corpus = args.corpus.expect("clap requires --corpus");
    let files = load_corpus(&corpus).map_err(|e| e.to_string())?;
    let options = ReplayOptions {
        modes,
        config,
        live: args.live,
        clock_start: args.seed_clock,
    };
    let items = replay_all(&files, &options).await;
    let written = write_reports(&items, &args.out).map_err(|e| e.to_string())?;
    let mut ok = true;
    for item in &items {
        match &item.outcome {
            Ok(report) => say!(
                "ok    {} mode {} effective_query={:?} results={} answer={}",
                item.scenario,
                item.mode.number(),
                report.effective_query,
                report.results.len(),
                report.answer.is_some()
            ),
            Err(e) => {
                ok = false;
                say!("FAIL  {} mode {}: {e}", item.scenario, item.mode.number());
            }
        }
    }
    say!("{} report(s) written to {}", written.len(), args.out.display());
    Ok(ok)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let result = match &args.diff {
        Some(paths) => diff(paths).map(|()| true),
        None => replay(args).await,
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("cosearch-replay: {e}");
            ExitCode::from(2)
        }
    }
}
