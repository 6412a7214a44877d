//! Offline replays of scenario files through the four modes.
//!
//! A scenario is one JSON file: a transcript, the query, an optional human
//! rewrite and clarification reply, the scripted model replies, and the
//! path of a mock web corpus (relative to the scenario file). See
//! `schemas/scenario.schema.json`.
//!
//! Reports depend only on the scenario and the config: timestamps come from
//! the scenario, agent time from a stepping clock, and each run gets a fresh
//! agent.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SteppingClock;
use crate::llm::{ScriptRule, ScriptedProvider};
use crate::model::{Locale, Utterance};
use crate::orchestrator::{Agent, Mode, ModeReport, ModeRequest, PipelineConfig, RunError};
use crate::page::CorpusFetcher;
use crate::search::{Corpus, CorpusIndex};
use crate::service::{BuildError, ServiceConfig};

pub const DEFAULT_CLOCK_START: i64 = 1_700_000_000_000;
pub const DEFAULT_ROOM: &str = "replay";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptLine {
    pub author_id: String,
    pub text: String,
    /// Defaults to the scenario clock start plus one second per line.
    #[serde(default)]
    pub timestamp: Option<i64>,
    #[serde(default)]
    pub is_agent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub locale: Option<Locale>,
    #[serde(default = "default_room")]
    pub room_id: String,
    pub user_id: String,
    #[serde(default)]
    pub clock_start: Option<i64>,
    #[serde(default)]
    pub transcript: Vec<TranscriptLine>,
    pub query: String,
    #[serde(default)]
    pub human_rewrite: Option<String>,
    #[serde(default)]
    pub clarification_reply: Option<String>,
    /// Mock web corpus directory, relative to the scenario file.
    pub web_corpus: PathBuf,
    /// Pipeline fields overriding the replay config for this scenario.
    #[serde(default)]
    pub pipeline: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub script: Vec<ScriptRule>,
}

fn default_room() -> String {
    DEFAULT_ROOM.into()
}

impl Scenario {
    /// Transcript as utterances, in room order.
    pub fn utterances(&self, clock_start: i64) -> Vec<Utterance> {
        let start = self.clock_start.unwrap_or(clock_start);
        self.transcript
            .iter()
            .enumerate()
            .map(|(i, line)| Utterance {
                id: format!("{}:{:06}", self.room_id, i + 1),
                room_id: self.room_id.clone(),
                author_id: line.author_id.clone(),
                text: line.text.clone(),
                timestamp: line.timestamp.unwrap_or(start + 1000 * i as i64),
                is_agent: line.is_agent,
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("scenario `{scenario}`, mode {mode}: {source}")]
    Run {
        scenario: String,
        mode: Mode,
        source: RunError,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ReplayError + '_ {
    move |source| ReplayError::Io {
        path: path.to_owned(),
        source,
    }
}

/// A scenario and the file it came from.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub path: PathBuf,
    pub scenario: Scenario,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| ReplayError::Parse {
            path: path.to_owned(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let invalid = |message: &str| ReplayError::Invalid {
            path: path.to_owned(),
            message: message.to_owned(),
        };
        if scenario.id.is_empty() || !scenario.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(invalid("id must be non-empty and use only [A-Za-z0-9_-]"));
        }
        if scenario.query.trim().is_empty() {
            return Err(invalid("query is empty"));
        }
        if let Some(i) = scenario.transcript.iter().position(|l| l.text.trim().is_empty()) {
            return Err(invalid(&format!("transcript line {} is empty", i + 1)));
        }
        Ok(Self {
            path: path.to_owned(),
            scenario,
        })
    }

    pub fn web_corpus_dir(&self) -> PathBuf {
        let base = self.path.parent().unwrap_or(Path::new("."));
        base.join(&self.scenario.web_corpus)
    }
}

/// Every `*.json` file directly under `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<ScenarioFile>, ReplayError> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_error(dir))? {
        let path = entry.map_err(io_error(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    let files = paths.iter().map(|p| ScenarioFile::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut ids = std::collections::BTreeSet::new();
    for file in &files {
        if !ids.insert(file.scenario.id.clone()) {
            return Err(ReplayError::Invalid {
                path: file.path.clone(),
                message: format!("duplicate scenario id `{}`", file.scenario.id),
            });
        }
    }
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub modes: Vec<Mode>,
    pub config: ServiceConfig,
    /// Use the providers named in the config instead of the scenario script
    /// and corpus.
    pub live: bool,
    /// Clock start for scenarios that do not set one.
    pub clock_start: i64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            modes: Mode::ALL.to_vec(),
            config: ServiceConfig::default(),
            live: false,
            clock_start: DEFAULT_CLOCK_START,
        }
    }
}

/// Pipeline config for one scenario and mode.
pub fn scenario_config(file: &ScenarioFile, base: &PipelineConfig, mode: Mode) -> Result<PipelineConfig, ReplayError> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    let fields = value.as_object_mut().expect("config is an object");
    for (key, v) in &file.scenario.pipeline {
        fields.insert(key.clone(), v.clone());
    }
    if let Some(locale) = file.scenario.locale {
        fields.insert("locale".into(), serde_json::to_value(locale).expect("locale serializes"));
    }
    let mut config: PipelineConfig = serde_json::from_value(value).map_err(|e| ReplayError::Invalid {
        path: file.path.clone(),
        message: format!("pipeline: {e}"),
    })?;
    config.mode = mode;
    Ok(config)
}

fn build_agent(file: &ScenarioFile, options: &ReplayOptions) -> Result<Agent, ReplayError> {
    let start = file.scenario.clock_start.unwrap_or(options.clock_start);
    let clock = Arc::new(SteppingClock::new(start, 1));
    let agent = if options.live {
        options.config.build_agent()?
    } else {
        let corpus = Arc::new(Corpus::load(&file.web_corpus_dir()).map_err(BuildError::from)?);
        let provider = Arc::new(ScriptedProvider::new(file.scenario.script.clone()));
        Agent::new(
            options.config.build_gateway(provider)?,
            Arc::new(CorpusIndex::new(corpus.clone())),
            Arc::new(CorpusFetcher::new(corpus)),
        )
        .with_parallelism(options.config.fetch.parallelism)
    };
    Ok(agent.with_clock(clock))
}

/// Runs one scenario through one mode.
pub async fn replay_scenario(file: &ScenarioFile, mode: Mode, options: &ReplayOptions) -> Result<ModeReport, ReplayError> {
    let scenario = &file.scenario;
    let config = scenario_config(file, &options.config.pipeline, mode)?;
    let agent = build_agent(file, options)?;
    let transcript = scenario.utterances(options.clock_start);
    let request = ModeRequest {
        transcript: &transcript,
        room_id: &scenario.room_id,
        user_id: &scenario.user_id,
        query: &scenario.query,
        human_rewrite: scenario.human_rewrite.as_deref(),
        clarification_reply: scenario.clarification_reply.as_deref(),
    };
    let mut report = agent.run_mode(request, &config).await.map_err(|source| ReplayError::Run {
        scenario: scenario.id.clone(),
        mode,
        source,
    })?;
    report.scenario = scenario.id.clone();
    Ok(report)
}

/// `<scenario>.mode<n>.json`
pub fn report_file_name(scenario: &str, mode: Mode) -> String {
    format!("{scenario}.mode{}.json", mode.number())
}

/// Result of one (scenario, mode) run.
#[derive(Debug)]
pub struct ReplayItem {
    pub scenario: String,
    pub mode: Mode,
    pub outcome: Result<ModeReport, ReplayError>,
}

/// Runs every scenario through every requested mode. Scenarios run
/// concurrently; results come back in (file name, mode) order.
pub async fn replay_all(files: &[ScenarioFile], options: &ReplayOptions) -> Vec<ReplayItem> {
    let runs = files.iter().map(|file| async move {
        let mut items = Vec::new();
        for &mode in &options.modes {
            items.push(ReplayItem {
                scenario: file.scenario.id.clone(),
                mode,
                outcome: replay_scenario(file, mode, options).await,
            });
        }
        items
    });
    futures::future::join_all(runs).await.into_iter().flatten().collect()
}

/// Writes each successful report to `out`. Returns the paths written.
pub fn write_reports(items: &[ReplayItem], out: &Path) -> Result<Vec<PathBuf>, ReplayError> {
    std::fs::create_dir_all(out).map_err(io_error(out))?;
    let mut written = Vec::new();
    for item in items {
        if let Ok(report) = &item.outcome {
            let path = out.join(report_file_name(&item.scenario, item.mode));
            std::fs::write(&path, report.to_json()).map_err(io_error(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reports are for different scenarios: `{0}` and `{1}`")]
pub struct ScenarioMismatch(pub String, pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldDiff {
    pub field: &'static str,
    pub left: String,
    pub right: String,
}

/// Field-level differences between two reports of one scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReportDiff {
    pub fields: Vec<FieldDiff>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

impl fmt::Display for ReportDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.fields {
            writeln!(f, "{}: {} -> {}", d.field, d.left, d.right)?;
        }
        Ok(())
    }
}

fn links<'a>(items: impl Iterator<Item = &'a str>) -> String {
    format!("[{}]", items.collect::<Vec<_>>().join(", "))
}

/// Compares mode, effective query, result and card links, answer presence,
/// cited ranks and the fallback flag. Identical reports give an empty diff.
pub fn diff_reports(left: &ModeReport, right: &ModeReport) -> Result<ReportDiff, ScenarioMismatch> {
    if left.scenario != right.scenario {
        return Err(ScenarioMismatch(left.scenario.clone(), right.scenario.clone()));
    }
    let summary = |r: &ModeReport| {
        let answer = r.answer.as_ref();
        [
            ("mode", r.mode.to_string()),
            ("effective_query", format!("{:?}", r.effective_query)),
            ("results", links(r.results.iter().map(|e| e.link.as_str()))),
            ("cards", links(r.cards.iter().map(|c| c.link.as_str()))),
            ("answer", if answer.is_some() { "present" } else { "absent" }.to_owned()),
            (
                "cited_ranks",
                answer.map_or_else(|| "[]".to_owned(), |a| format!("{:?}", a.cited_ranks)),
            ),
            ("llm_only", answer.is_some_and(|a| a.answer.llm_only).to_string()),
        ]
    };
    let fields = summary(left)
        .into_iter()
        .zip(summary(right))
        .filter(|(l, r)| l.1 != r.1)
        .map(|((field, left), (_, right))| FieldDiff { field, left, right })
        .collect();
    Ok(ReportDiff { fields })
}
