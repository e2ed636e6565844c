use std::sync::Arc;

use crate::config::AgentConfig;
use crate::llm::{estimate_tokens, CompletionRequest, LlmError, PromptMessage};
use crate::memory::DataMemory;
use crate::skills::SkillBundle;
use crate::tools::ToolSpec;

/// Fixed protocol text at the top of every system block.
pub const PREAMBLE: &str = "You are DataClaw, a local data analysis agent. Work one step at a time.\n\
Every reply ends with exactly one action, either\n\
THOUGHT: <your reasoning>\n\
ACTION: {\"tool\": \"<tool name>\", \"args\": {...}}\n\
or, when the task is complete,\n\
THOUGHT: <your reasoning>\n\
FINAL: <answer for the user>\n\
Each ACTION is answered with an OBSERVATION holding the tool result as JSON. \
Observations starting with ERROR: describe a failed call; fix the arguments and try again. \
Datasets are referenced by handles such as d1; file paths are relative to the workspace.\n";

pub const STOP_SEQUENCE: &str = "\nOBSERVATION:";
pub const MAX_OUTPUT_TOKENS: u32 = 1024;

pub struct PromptInputs<'a> {
    pub config: &'a AgentConfig,
    pub tools: &'a [ToolSpec],
    pub agents_md: &'a str,
    pub souls_md: &'a str,
    pub skills: &'a [Arc<SkillBundle>],
    pub memory: &'a DataMemory,
}

/// A prompt plus the names of the active skills whose bodies fit the skill budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPrompt {
    pub request: CompletionRequest,
    pub included_skills: Vec<String>,
}

fn tool_catalog(tools: &[ToolSpec]) -> String {
    let mut out = String::from("\n## Tools\n");
    for t in tools {
        let args: Vec<String> = t
            .arg_schema
            .fields
            .iter()
            .map(|(n, f)| format!("{n}{}: {}", if f.required { "" } else { "?" }, serde_json::to_value(f.ty).unwrap().as_str().unwrap_or("")))
            .collect();
        out.push_str(&format!("- {}({}): {}\n", t.name, args.join(", "), t.description));
    }
    out
}

/// Assembles the system block and message window.
///
/// Skill bodies share a budget of a quarter of the context window; when they do
/// not fit, the latest-registered active skills are dropped first.
pub fn build_prompt(inputs: &PromptInputs<'_>) -> Result<BuiltPrompt, LlmError> {
    let mut system = String::from(PREAMBLE);
    if !inputs.tools.is_empty() {
        system.push_str(&tool_catalog(inputs.tools));
    }
    if !inputs.agents_md.trim().is_empty() {
        system.push_str("\n## Instructions\n");
        system.push_str(inputs.agents_md.trim_end());
        system.push('\n');
    }
    if !inputs.souls_md.trim().is_empty() {
        system.push_str("\n## User preferences\n");
        system.push_str(inputs.souls_md.trim_end());
        system.push('\n');
    }

    let budget = inputs.config.context_window_tokens as u64 / 4;
    let mut bodies: Vec<(String, String)> =
        inputs.skills.iter().map(|s| (s.name.clone(), s.prompt_body())).collect();
    while !bodies.is_empty() && bodies.iter().map(|(_, b)| estimate_tokens(b)).sum::<u64>() > budget {
        bodies.pop();
    }
    if !bodies.is_empty() {
        system.push_str("\n## Active skills\n");
        for (_, b) in &bodies {
            system.push_str(b);
        }
    }

    let messages = inputs
        .memory
        .entries()
        .iter()
        .map(|m| PromptMessage { role: m.role.as_str().to_string(), text: m.text.clone() })
        .collect();
    let request = CompletionRequest {
        system_block: system,
        messages,
        stop_sequences: vec![STOP_SEQUENCE.to_string()],
        max_output_tokens: MAX_OUTPUT_TOKENS,
        context_window_tokens: inputs.config.context_window_tokens as u64,
    };
    request.check_budget()?;
    Ok(BuiltPrompt { request, included_skills: bodies.into_iter().map(|(n, _)| n).collect() })
}
