//! Agent configuration, its on-disk key/value form, and `DATACLAW_*` overrides.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::prompt::PREAMBLE;
use crate::llm::estimate_tokens;
use crate::memory::COMPACTION_RESERVE_TOKENS;

pub const ENV_PREFIX: &str = "DATACLAW_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    FinalOnly,
    Progress,
    FullTrace,
}

impl Verbosity {
    pub fn as_str(self) -> &'static str {
        match self {
            Verbosity::FinalOnly => "final_only",
            Verbosity::Progress => "progress",
            Verbosity::FullTrace => "full_trace",
        }
    }
}

impl FromStr for Verbosity {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final_only" => Ok(Verbosity::FinalOnly),
            "progress" => Ok(Verbosity::Progress),
            "full_trace" => Ok(Verbosity::FullTrace),
            other => Err(ConfigError::Invalid(format!(
                "unknown verbosity {other:?} (expected final_only, progress or full_trace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_iterations: u32,
    pub context_window_tokens: u32,
    pub compaction_threshold: f64,
    pub verbosity: Verbosity,
    pub max_concurrent_sessions: u32,
    pub keep_recent_messages: u32,
    pub parse_retry_limit: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_iterations: 50,
            context_window_tokens: 8192,
            compaction_threshold: 0.8,
            verbosity: Verbosity::Progress,
            max_concurrent_sessions: 50,
            keep_recent_messages: 6,
            parse_retry_limit: 3,
        }
    }
}

impl AgentConfig {
    /// Tokens the compacted memory may occupy: `threshold × window`, floored.
    pub fn compaction_limit(&self) -> u64 {
        (self.compaction_threshold * self.context_window_tokens as f64).floor() as u64
    }

    /// Smallest prompt the engine can ever send: preamble, compaction reserve,
    /// and at least one token per kept message.
    pub fn minimum_prompt_overhead(&self) -> u64 {
        estimate_tokens(PREAMBLE) + COMPACTION_RESERVE_TOKENS + self.keep_recent_messages as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_iterations", self.max_iterations),
            ("context_window_tokens", self.context_window_tokens),
            ("max_concurrent_sessions", self.max_concurrent_sessions),
            ("keep_recent_messages", self.keep_recent_messages),
            ("parse_retry_limit", self.parse_retry_limit),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.compaction_threshold > 0.0 && self.compaction_threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "compaction_threshold must be in (0, 1], got {}",
                self.compaction_threshold
            )));
        }
        let limit = self.compaction_threshold * self.context_window_tokens as f64;
        let overhead = self.minimum_prompt_overhead();
        if limit <= overhead as f64 {
            return Err(ConfigError::Invalid(format!(
                "compaction_threshold × context_window_tokens = {limit} must exceed the minimum prompt overhead of {overhead} tokens"
            )));
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        // `toml` renders a flat struct as one `key = value` line per field.
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn parse_file_string(text: &str) -> Result<Self, ConfigError> {
        let cfg: AgentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` when present (defaults otherwise), then applies env overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = match std::fs::read_to_string(path) {
            Ok(text) => toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => AgentConfig::default(),
            Err(e) => return Err(e.into()),
        };
        cfg.apply_overrides(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `DATACLAW_<FIELD>` overrides from the given variables.
    pub fn apply_overrides<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, value) in vars {
            let Some(field) = key.strip_prefix(ENV_PREFIX) else { continue };
            let field = field.to_ascii_lowercase();
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                ConfigError::Invalid(format!("{key}={value}: {e}"))
            };
            match field.as_str() {
                "max_iterations" => self.max_iterations = value.parse().map_err(|e| bad(&e))?,
                "context_window_tokens" => {
                    self.context_window_tokens = value.parse().map_err(|e| bad(&e))?
                }
                "compaction_threshold" => {
                    self.compaction_threshold = value.parse().map_err(|e| bad(&e))?
                }
                "verbosity" => self.verbosity = value.parse()?,
                "max_concurrent_sessions" => {
                    self.max_concurrent_sessions = value.parse().map_err(|e| bad(&e))?
                }
                "keep_recent_messages" => {
                    self.keep_recent_messages = value.parse().map_err(|e| bad(&e))?
                }
                "parse_retry_limit" => {
                    self.parse_retry_limit = value.parse().map_err(|e| bad(&e))?
                }
                // other DATACLAW_* variables belong to the CLI (backend selection etc.)
                _ => {}
            }
        }
        Ok(())
    }
}
