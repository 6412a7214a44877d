use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Locale, DEFAULT_WINDOW_LIMIT};
use crate::page::DEFAULT_TOKEN_CAP;
use crate::search::DEFAULT_MAX_RESULTS;

pub const DEFAULT_PAGE_SIZE: usize = 3;
pub const DEFAULT_CLARIFICATION_EXPIRY_MS: i64 = 10 * 60 * 1000;

/// What a pipeline run returns.
///
/// | mode | searches for | answer |
/// |------|--------------|--------|
/// | 1 `direct_search` | the query as typed | no |
/// | 2 `wizard_of_oz` | a rewrite supplied from outside | no |
/// | 3 `rewrite_then_search` | the model's rewrite | no |
/// | 4 `full_agent` | the model's rewrite | cited answer |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    DirectSearch,
    WizardOfOz,
    RewriteThenSearch,
    FullAgent,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::DirectSearch,
        Mode::WizardOfOz,
        Mode::RewriteThenSearch,
        Mode::FullAgent,
    ];

    pub fn number(self) -> u8 {
        match self {
            Mode::DirectSearch => 1,
            Mode::WizardOfOz => 2,
            Mode::RewriteThenSearch => 3,
            Mode::FullAgent => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::DirectSearch => "direct_search",
            Mode::WizardOfOz => "wizard_of_oz",
            Mode::RewriteThenSearch => "rewrite_then_search",
            Mode::FullAgent => "full_agent",
        }
    }

    /// Whether the mode asks the model to rewrite the query.
    pub fn plans(self) -> bool {
        matches!(self, Mode::RewriteThenSearch | Mode::FullAgent)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    /// Accepts `1`..`4` or the snake_case name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| s == m.name() || s == m.number().to_string())
            .ok_or_else(|| format!("unknown mode `{s}` (expected 1-4 or a mode name)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("max_clarification_rounds must be 0 or 1, got {0}")]
    Rounds(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// 0 never asks; 1 allows one clarify-and-wait cycle per query.
    pub max_clarification_rounds: u8,
    pub window_limit: usize,
    pub max_results: usize,
    pub token_cap: usize,
    pub locale: Locale,
    pub page_size: usize,
    pub clarification_expiry_ms: i64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FullAgent,
            max_clarification_rounds: 1,
            window_limit: DEFAULT_WINDOW_LIMIT,
            max_results: DEFAULT_MAX_RESULTS,
            token_cap: DEFAULT_TOKEN_CAP,
            locale: Locale::En,
            page_size: DEFAULT_PAGE_SIZE,
            clarification_expiry_ms: DEFAULT_CLARIFICATION_EXPIRY_MS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("window_limit", self.window_limit),
            ("max_results", self.max_results),
            ("token_cap", self.token_cap),
            ("page_size", self.page_size),
        ] {
            if value == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.clarification_expiry_ms <= 0 {
            return Err(ConfigError::NotPositive("clarification_expiry_ms"));
        }
        if self.max_clarification_rounds > 1 {
            return Err(ConfigError::Rounds(self.max_clarification_rounds));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        assert_eq!("1".parse::<Mode>(), Ok(Mode::DirectSearch));
        assert_eq!("full_agent".parse::<Mode>(), Ok(Mode::FullAgent));
        assert!("5".parse::<Mode>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            page_size: 0,
            ..PipelineConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::NotPositive("page_size")));
        let bad = PipelineConfig {
            max_clarification_rounds: 2,
            ..PipelineConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::Rounds(2)));
        let parsed: PipelineConfig = toml::from_str("mode = \"direct_search\"\nlocale = \"zh\"").unwrap();
        assert_eq!(parsed.mode, Mode::DirectSearch);
        assert_eq!(parsed.window_limit, 20);
    }
}
