//! The ReAct loop: prompt, parse, dispatch, observe, repeat.

mod action;
pub mod prompt;

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::AgentConfig;
use crate::llm::{estimate_tokens, truncate_to_tokens, Backend};
use crate::memory::{CompactionRecord, DataMemory, MemoryError};
use crate::skills::SkillSet;
use crate::stream::EventSink;
use crate::tools::{RegistrySnapshot, ToolContext};
use crate::types::{AgentEvent, Artifact, ChatMessage, Clock, EventKind, Id, IdGen, Role, Session, Timestamp};

pub use action::{parse_action, Action, UnparsableAction};
pub use prompt::{build_prompt, BuiltPrompt, PromptInputs, PREAMBLE};

pub const OBSERVATION_TOKEN_LIMIT: u64 = 1024;
pub const TRUNCATION_MARKER: &str = "\n[truncated]";
pub const PARSE_ERROR_OBSERVATION: &str = "ERROR: unparsable action; reply with ACTION: {json} or FINAL: text";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReActStep {
    pub step_index: u32,
    pub thought: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    MaxIterations,
    ParseFailures,
    BackendFailure,
    ContextOverflow,
    Cancelled,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::MaxIterations => "max_iterations",
            AbortReason::ParseFailures => "parse_failures",
            AbortReason::BackendFailure => "backend_failure",
            AbortReason::ContextOverflow => "context_overflow",
            AbortReason::Cancelled => "cancelled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Final { text: String },
    Aborted { reason: AbortReason, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub session_id: Id,
    pub steps: Vec<ReActStep>,
    pub outcome: Outcome,
    pub started_at: Timestamp,
    pub ended_at: Timestamp,
    /// Iterations whose output could not be parsed; they produce no step.
    pub parse_failures: u32,
    pub compactions: Vec<CompactionRecord>,
    pub artifacts: Vec<Artifact>,
    pub active_skills: Vec<String>,
}

impl TurnTrace {
    pub fn final_text(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Final { text } => Some(text),
            Outcome::Aborted { .. } => None,
        }
    }
}

/// Shared, read-only collaborators of one turn.
pub struct TurnDeps<'a> {
    pub config: &'a AgentConfig,
    pub backend: &'a dyn Backend,
    pub tools: &'a RegistrySnapshot,
    pub skills: &'a SkillSet,
    pub sink: &'a dyn EventSink,
    pub clock: &'a dyn Clock,
    pub ids: &'a dyn IdGen,
    pub agents_md: &'a str,
    pub souls_md: &'a str,
    pub cancel: &'a AtomicBool,
}

/// Caps an observation at the token limit, marker included.
pub fn truncate_observation(text: &str) -> String {
    if estimate_tokens(text) <= OBSERVATION_TOKEN_LIMIT {
        return text.to_string();
    }
    let budget = OBSERVATION_TOKEN_LIMIT - estimate_tokens(TRUNCATION_MARKER);
    format!("{}{TRUNCATION_MARKER}", truncate_to_tokens(text, budget))
}

struct Emitter<'a> {
    sink: &'a dyn EventSink,
    clock: &'a dyn Clock,
    session_id: &'a Id,
}

impl Emitter<'_> {
    fn emit(&self, kind: EventKind, payload: Value) {
        let Value::Object(payload) = payload else { unreachable!("payloads are objects") };
        let event = AgentEvent {
            seq: self.sink.last_seq(self.session_id) + 1,
            kind,
            session_id: self.session_id.clone(),
            timestamp: self.clock.now(),
            payload,
        };
        if let Err(e) = self.sink.emit(event) {
            tracing::error!(session = %self.session_id, error = %e, "event dropped");
        }
    }
}

/// Runs one user turn to a final answer or an abort. Never panics on model or tool misbehavior.
pub fn run_turn(
    session: &Session,
    user_message: ChatMessage,
    deps: &TurnDeps<'_>,
    memory: &mut DataMemory,
    ctx: &mut ToolContext<'_>,
) -> TurnTrace {
    let started_at = deps.clock.now();
    let out = Emitter { sink: deps.sink, clock: deps.clock, session_id: &session.id };
    let active = deps.skills.match_active(&user_message.text);
    let active_names: Vec<String> = active.iter().map(|s| s.name.clone()).collect();
    let tool_specs = deps.tools.specs();

    out.emit(
        EventKind::SessionStart,
        json!({
            "turn": session.turn_count + 1,
            "message_id": user_message.id,
            "text": user_message.text,
            "active_skills": active_names,
            "skills_version": deps.skills.version,
        }),
    );
    let channel = user_message.channel_id.clone();
    memory.append(user_message);

    let mut steps: Vec<ReActStep> = Vec::new();
    let mut compactions = Vec::new();
    let mut parse_failures = 0u32;
    let mut consecutive_failures = 0u32;

    let message = |role: Role, text: String| {
        ChatMessage::new(deps.ids.next_id(), session.id.clone(), channel.clone(), role, text, deps.clock.now())
    };

    let outcome: Outcome = 'turn: {
        for _ in 0..deps.config.max_iterations {
            if deps.cancel.load(Ordering::SeqCst) {
                break 'turn Outcome::Aborted { reason: AbortReason::Cancelled, detail: "turn cancelled".into() };
            }
            match memory.maybe_compact(deps.config, deps.backend, deps.clock.now()) {
                Ok(Some(rec)) => compactions.push(rec),
                Ok(None) => {}
                Err(e @ MemoryError::CompactionInsufficient { .. }) => {
                    break 'turn Outcome::Aborted { reason: AbortReason::ContextOverflow, detail: e.to_string() }
                }
                Err(e) => break 'turn Outcome::Aborted { reason: AbortReason::BackendFailure, detail: e.to_string() },
            }
            let prompt = match build_prompt(&PromptInputs {
                config: deps.config,
                tools: &tool_specs,
                agents_md: deps.agents_md,
                souls_md: deps.souls_md,
                skills: &active,
                memory,
            }) {
                Ok(p) => p,
                Err(e) => break 'turn Outcome::Aborted { reason: AbortReason::BackendFailure, detail: e.to_string() },
            };
            let reply = match deps.backend.complete(&prompt.request) {
                Ok(r) => r.text,
                Err(e) => break 'turn Outcome::Aborted { reason: AbortReason::BackendFailure, detail: e.to_string() },
            };
            memory.append(message(Role::Agent, reply.clone()));

            let (thought, action) = match parse_action(&reply) {
                Ok(parsed) => {
                    consecutive_failures = 0;
                    parsed
                }
                Err(e) => {
                    parse_failures += 1;
                    consecutive_failures += 1;
                    tracing::warn!(session = %session.id, error = %e, "model output not parsable");
                    if consecutive_failures >= deps.config.parse_retry_limit {
                        break 'turn Outcome::Aborted {
                            reason: AbortReason::ParseFailures,
                            detail: format!("{consecutive_failures} consecutive unparsable replies; last: {e}"),
                        };
                    }
                    memory.append(message(Role::Tool, PARSE_ERROR_OBSERVATION.to_string()).with_meta("tool", "parser"));
                    continue;
                }
            };

            let step_index = steps.len() as u32 + 1;
            out.emit(EventKind::Thinking, json!({"step": step_index, "thought": thought}));
            match action {
                Action::Final { text } => {
                    let artifacts: Vec<&str> = ctx.produced.iter().map(|a| a.relative_path.as_str()).collect();
                    out.emit(EventKind::Message, json!({"step": step_index, "text": text, "artifacts": artifacts}));
                    steps.push(ReActStep { step_index, thought, action: Action::Final { text: text.clone() }, observation: None });
                    break 'turn Outcome::Final { text };
                }
                Action::ToolCall { tool, args } => {
                    out.emit(EventKind::ToolCall, json!({"step": step_index, "tool": tool, "args": args}));
                    let observation = truncate_observation(&deps.tools.dispatch(&tool, &Value::Object(args.clone()), ctx));
                    memory.append(message(Role::Tool, observation.clone()).with_meta("tool", &tool));
                    out.emit(
                        EventKind::ToolResult,
                        json!({
                            "step": step_index,
                            "tool": tool,
                            "observation": observation,
                            "is_error": observation.starts_with("ERROR:"),
                        }),
                    );
                    steps.push(ReActStep {
                        step_index,
                        thought,
                        action: Action::ToolCall { tool, args },
                        observation: Some(observation),
                    });
                }
            }
        }
        Outcome::Aborted {
            reason: AbortReason::MaxIterations,
            detail: format!("no final answer within {} iterations", deps.config.max_iterations),
        }
    };

    let n = steps.len();
    match &outcome {
        Outcome::Final { .. } => out.emit(EventKind::Done, json!({"steps": n, "outcome": "final"})),
        Outcome::Aborted { reason, detail } => {
            out.emit(EventKind::Error, json!({"reason": reason.as_str(), "detail": detail, "steps": n}))
        }
    }

    TurnTrace {
        session_id: session.id.clone(),
        steps,
        outcome,
        started_at,
        ended_at: deps.clock.now(),
        parse_failures,
        compactions,
        artifacts: ctx.produced.clone(),
        active_skills: active_names,
    }
}

/// Kinds of one turn's events must match
/// `session_start (thinking tool_call tool_result)* thinking? (message done | error)`.
pub fn matches_turn_grammar(kinds: &[EventKind]) -> bool {
    use EventKind::*;
    let Some((&SessionStart, mut rest)) = kinds.split_first() else { return false };
    while let [Thinking, ToolCall, ToolResult, tail @ ..] = rest {
        rest = tail;
    }
    if let [Thinking, tail @ ..] = rest {
        rest = tail;
    }
    matches!(rest, [Message, Done] | [Error])
}
