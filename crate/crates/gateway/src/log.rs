//! Bounded in-memory tail of gateway activity, served by `/api/status`.

use std::collections::VecDeque;
use std::sync::Mutex;

use dataclaw_core::types::{Clock, SystemClock, Timestamp};
use serde::{Deserialize, Serialize};

pub const LOG_TAIL: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub at: Timestamp,
    pub level: Level,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RecentLog {
    lines: Mutex<VecDeque<LogLine>>,
}

impl RecentLog {
    /// Appends a line and forwards it to `tracing`.
    pub fn push(&self, level: Level, message: impl Into<String>) {
        let message = message.into();
        match level {
            Level::Info => tracing::info!("{message}"),
            Level::Warn => tracing::warn!("{message}"),
            Level::Error => tracing::error!("{message}"),
        }
        let mut lines = self.lines.lock().unwrap();
        if lines.len() == LOG_TAIL {
            lines.pop_front();
        }
        lines.push_back(LogLine {
            at: SystemClock.now(),
            level,
            message,
        });
    }

    pub fn tail(&self, n: usize) -> Vec<LogLine> {
        let lines = self.lines.lock().unwrap();
        lines
            .iter()
            .skip(lines.len().saturating_sub(n))
            .cloned()
            .collect()
    }
}
