use std::sync::Mutex;

use super::{
    deterministic_summary, Backend, BackendKind, CompletionRequest, CompletionResult, LlmError,
};
use crate::types::ChatMessage;

/// Replays canned responses in order; errors once the list is exhausted.
pub struct ScriptedBackend {
    script: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<String>) -> Self {
        ScriptedBackend { script, cursor: Mutex::new(0) }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.check_budget()?;
        let mut cursor = self.cursor.lock().unwrap();
        let text = self
            .script
            .get(*cursor)
            .cloned()
            .ok_or(LlmError::ScriptExhausted(self.script.len()))?;
        *cursor += 1;
        Ok(CompletionResult::for_request(request, text))
    }

    fn summarize(&self, messages: &[ChatMessage], budget_tokens: u64) -> Result<String, LlmError> {
        deterministic_summary(messages, budget_tokens)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}
