use std::time::Duration;

use serde_json::{json, Value};

use super::{
    truncate_to_tokens, Backend, BackendKind, CompletionRequest, CompletionResult, LlmError,
    PromptMessage,
};
use crate::types::ChatMessage;

const REQUEST_TIMEOUT: Duration = Duration::from_secs(300);

/// Chat-completions client. `endpoint` is the full URL the request is POSTed to.
pub struct RemoteBackend {
    endpoint: String,
    model: String,
}

impl RemoteBackend {
    pub fn new(endpoint: String, model: String) -> Self {
        RemoteBackend { endpoint, model }
    }

    pub(crate) fn wire_body(&self, request: &CompletionRequest) -> Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if !request.system_block.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_block}));
        }
        for m in &request.messages {
            let (role, content) = match m.role.as_str() {
                "agent" | "assistant" => ("assistant", m.text.clone()),
                "tool" => ("user", format!("OBSERVATION: {}", m.text)),
                "system" => ("system", m.text.clone()),
                _ => ("user", m.text.clone()),
            };
            messages.push(json!({"role": role, "content": content}));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "stop": request.stop_sequences,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn post(&self, body: &Value) -> Result<String, LlmError> {
        // The blocking client owns an internal runtime; build and drop it on the calling thread.
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| LlmError::BackendUnreachable(e.to_string()))?;
        let resp = client
            .post(&self.endpoint)
            .json(body)
            .send()
            .map_err(|e| LlmError::BackendUnreachable(e.to_string()))?;
        let status = resp.status();
        let value: Value = resp
            .json()
            .map_err(|e| LlmError::BadResponse(format!("status {status}: {e}")))?;
        if !status.is_success() {
            return Err(LlmError::BadResponse(format!("status {status}: {value}")));
        }
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.check_budget()?;
        let text = self.post(&self.wire_body(request))?;
        Ok(CompletionResult::for_request(request, text))
    }

    fn summarize(&self, messages: &[ChatMessage], budget_tokens: u64) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptySummaryInput);
        }
        let transcript: String = messages
            .iter()
            .map(|m| format!("{}: {}\n", m.role.as_str(), m.text))
            .collect();
        let request = CompletionRequest {
            system_block: format!(
                "Summarize the conversation below in at most {} words. Keep table names, column \
                 names, numeric findings, errors and user preferences. Reply with the summary only.",
                (budget_tokens * 3 / 4).max(1)
            ),
            messages: vec![PromptMessage { role: "user".into(), text: transcript }],
            stop_sequences: vec![],
            max_output_tokens: budget_tokens.clamp(1, u32::MAX as u64) as u32,
            context_window_tokens: u64::MAX,
        };
        let text = self.post(&self.wire_body(&request))?;
        Ok(truncate_to_tokens(text.trim(), budget_tokens).to_string())
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteChatApi
    }
}
