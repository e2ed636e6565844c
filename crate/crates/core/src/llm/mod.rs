//! Language-model backends behind a small blocking trait.
//!
//! Two kinds ship: a remote chat-completions client and a scripted replay
//! backend used for offline, byte-deterministic runs.

mod remote;
mod scripted;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ChatMessage;

pub use remote::RemoteBackend;
pub use scripted::ScriptedBackend;

/// Characters kept from each message in the deterministic summary.
pub const SUMMARY_LINE_CHARS: usize = 80;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("request needs {needed} tokens but the context window is {window}")]
    BudgetExceeded { needed: u64, window: u64 },
    #[error("summarize called with no messages")]
    EmptySummaryInput,
    #[error("cannot load script: {0}")]
    ScriptLoad(String),
}

/// `ceil(bytes / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// Longest prefix of `text` whose estimate fits in `budget_tokens`, cut on a char boundary.
pub fn truncate_to_tokens(text: &str, budget_tokens: u64) -> &str {
    let max_bytes = (budget_tokens.saturating_mul(4)).min(text.len() as u64) as usize;
    let mut end = max_bytes;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system_block: String,
    pub messages: Vec<PromptMessage>,
    pub stop_sequences: Vec<String>,
    pub max_output_tokens: u32,
    pub context_window_tokens: u64,
}

impl CompletionRequest {
    pub fn estimated_tokens(&self) -> u64 {
        estimate_tokens(&self.system_block)
            + self.messages.iter().map(|m| estimate_tokens(&m.text)).sum::<u64>()
    }

    pub fn check_budget(&self) -> Result<(), LlmError> {
        let needed = self.estimated_tokens();
        if needed > self.context_window_tokens {
            return Err(LlmError::BudgetExceeded { needed, window: self.context_window_tokens });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub input_token_estimate: u64,
    pub output_token_estimate: u64,
}

impl CompletionResult {
    pub(crate) fn for_request(request: &CompletionRequest, text: String) -> Self {
        CompletionResult {
            input_token_estimate: request.estimated_tokens(),
            output_token_estimate: estimate_tokens(&text),
            text,
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError>;

    /// Produces a summary whose estimate never exceeds `budget_tokens`.
    fn summarize(&self, messages: &[ChatMessage], budget_tokens: u64) -> Result<String, LlmError>;

    fn kind(&self) -> BackendKind;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChatApi,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    RemoteChatApi { endpoint: String, model_name: String },
    Scripted { script: Vec<String> },
}

impl BackendDescriptor {
    pub fn build(&self) -> Arc<dyn Backend> {
        match self {
            BackendDescriptor::RemoteChatApi { endpoint, model_name } => {
                Arc::new(RemoteBackend::new(endpoint.clone(), model_name.clone()))
            }
            BackendDescriptor::Scripted { script } => Arc::new(ScriptedBackend::new(script.clone())),
        }
    }
}

/// Loads a scripted backend's responses: a JSON array of strings.
pub fn load_script(path: &Path) -> Result<Vec<String>, LlmError> {
    let bytes = std::fs::read(path).map_err(|e| LlmError::ScriptLoad(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| LlmError::ScriptLoad(format!("{}: {e}", path.display())))
}

/// `role: <first 80 chars>` per message, newline-joined, truncated to the budget.
pub fn deterministic_summary(messages: &[ChatMessage], budget_tokens: u64) -> Result<String, LlmError> {
    if messages.is_empty() {
        return Err(LlmError::EmptySummaryInput);
    }
    let lines: Vec<String> = messages
        .iter()
        .map(|m| {
            let head: String = m.text.chars().take(SUMMARY_LINE_CHARS).collect();
            format!("{}: {}", m.role.as_str(), head.replace('\n', " "))
        })
        .collect();
    let joined = lines.join("\n");
    Ok(truncate_to_tokens(&joined, budget_tokens).to_string())
}

/// Hands out a backend per session. Scripted factories give each session a fresh cursor.
pub trait BackendFactory: Send + Sync {
    fn backend_for(&self, session_id: &crate::types::Id) -> Arc<dyn Backend>;
}

/// One backend shared by every session.
pub struct SharedBackend(pub Arc<dyn Backend>);

impl BackendFactory for SharedBackend {
    fn backend_for(&self, _session_id: &crate::types::Id) -> Arc<dyn Backend> {
        self.0.clone()
    }
}

/// Each session replays the same script from its first response.
pub struct ScriptPerSession {
    script: Vec<String>,
    backends: std::sync::Mutex<std::collections::HashMap<crate::types::Id, Arc<dyn Backend>>>,
}

impl ScriptPerSession {
    pub fn new(script: Vec<String>) -> Self {
        ScriptPerSession { script, backends: Default::default() }
    }
}

impl BackendFactory for ScriptPerSession {
    fn backend_for(&self, session_id: &crate::types::Id) -> Arc<dyn Backend> {
        self.backends
            .lock()
            .unwrap()
            .entry(session_id.clone())
            .or_insert_with(|| Arc::new(ScriptedBackend::new(self.script.clone())))
            .clone()
    }
}

impl<F> BackendFactory for F
where
    F: Fn(&crate::types::Id) -> Arc<dyn Backend> + Send + Sync,
{
    fn backend_for(&self, session_id: &crate::types::Id) -> Arc<dyn Backend> {
        self(session_id)
    }
}
