//! Multi-tiered memory.
//!
//! * [`DataMemory`]: per-session rolling message store the prompt is built from.
//! * [`DataMemory::maybe_compact`]: folds older entries into one summary entry once the
//!   token estimate strictly exceeds `compaction_threshold × context_window_tokens`.
//! * [`MemoryFiles`]: the workspace markdown stores (MEMORY.md, AGENTS.md, SOULS.md).
//! * [`memory_search`]: bag-of-terms retrieval over MEMORY.md and SOULS.md bullets.

mod files;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AgentConfig;
use crate::llm::{estimate_tokens, Backend, LlmError};
use crate::types::{ChatMessage, Id, Role, Timestamp};

pub use files::{GlobalMemoryEntry, MemoryFileKind, MemoryFiles, MemoryKind, MEMORY_HEADER, SOULS_TEMPLATE};
pub use search::{memory_search, SearchHit};

/// Tokens held back from the summary budget during compaction.
pub const COMPACTION_RESERVE_TOKENS: u64 = 64;
pub const COMPACTED_PREFIX: &str = "[compacted memory] ";
pub const COMPACTED_TAG: &str = "compacted";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("compaction insufficient: {recent_tokens} tokens in the kept tail leave no room under the {limit}-token limit")]
    CompactionInsufficient { recent_tokens: u64, limit: u64 },
    #[error("summarizer failed: {0}")]
    Summarizer(#[from] LlmError),
    #[error("memory text must be a single line")]
    MultilineText,
    #[error("memory search query must not be empty")]
    EmptyQuery,
    #[error("memory io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactionRecord {
    pub fired_at: Timestamp,
    pub messages_compacted: usize,
    pub tokens_before: u64,
    pub tokens_after: u64,
    pub summary_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMemory {
    session_id: Id,
    channel_id: String,
    entries: Vec<ChatMessage>,
    token_estimate: u64,
    compaction_count: u32,
}

impl DataMemory {
    pub fn new(session_id: Id, channel_id: impl Into<String>) -> Self {
        DataMemory {
            session_id,
            channel_id: channel_id.into(),
            entries: Vec::new(),
            token_estimate: 0,
            compaction_count: 0,
        }
    }

    pub fn session_id(&self) -> &Id {
        &self.session_id
    }

    pub fn entries(&self) -> &[ChatMessage] {
        &self.entries
    }

    pub fn token_estimate(&self) -> u64 {
        self.token_estimate
    }

    pub fn compaction_count(&self) -> u32 {
        self.compaction_count
    }

    pub fn append(&mut self, message: ChatMessage) {
        self.token_estimate += estimate_tokens(&message.text);
        self.entries.push(message);
    }

    pub fn recount(&self) -> u64 {
        self.entries.iter().map(|m| estimate_tokens(&m.text)).sum()
    }

    /// Compacts when the estimate strictly exceeds the configured limit.
    ///
    /// The last `keep_recent_messages` entries survive verbatim; everything older,
    /// including an earlier summary, becomes a single `system` entry.
    pub fn maybe_compact(
        &mut self,
        config: &AgentConfig,
        summarizer: &dyn Backend,
        now: Timestamp,
    ) -> Result<Option<CompactionRecord>, MemoryError> {
        let limit = config.compaction_limit();
        if self.token_estimate <= limit {
            return Ok(None);
        }
        let keep = (config.keep_recent_messages as usize).min(self.entries.len());
        let split = self.entries.len() - keep;
        let recent_tokens: u64 =
            self.entries[split..].iter().map(|m| estimate_tokens(&m.text)).sum();
        let insufficient = MemoryError::CompactionInsufficient { recent_tokens, limit };
        if split == 0 {
            return Err(insufficient);
        }
        let Some(budget) = limit.checked_sub(recent_tokens + COMPACTION_RESERVE_TOKENS) else {
            return Err(insufficient);
        };
        // the prefix and a possible rounding token come out of the same budget
        let summary_budget = budget.saturating_sub(estimate_tokens(COMPACTED_PREFIX) + 1);
        let summary = summarizer.summarize(&self.entries[..split], summary_budget)?;

        let tokens_before = self.token_estimate;
        let compacted_id = Id::derived(&[
            "compaction",
            self.session_id.as_str(),
            &self.compaction_count.to_string(),
        ]);
        let entry = ChatMessage::new(
            compacted_id,
            self.session_id.clone(),
            self.channel_id.clone(),
            Role::System,
            format!("{COMPACTED_PREFIX}{summary}"),
            now.clone(),
        )
        .with_meta("tag", COMPACTED_TAG);

        let tokens_after = estimate_tokens(&entry.text) + recent_tokens;
        if tokens_after > limit {
            return Err(insufficient);
        }
        let mut next = Vec::with_capacity(keep + 1);
        next.push(entry);
        next.extend(self.entries.drain(split..));
        self.entries = next;
        self.token_estimate = tokens_after;
        self.compaction_count += 1;
        Ok(Some(CompactionRecord {
            fired_at: now,
            messages_compacted: split,
            tokens_before,
            tokens_after,
            summary_text: summary,
        }))
    }
}
