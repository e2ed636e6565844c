//! SKILL.md grammar.
//!
//! ```text
//! ---
//! name: experiment-tracker
//! description: Track experiment runs
//! version: 1.0
//! triggers: [experiment, track]
//! tool: log_run            (optional, together with command)
//! command: run.sh          (relative to the skill directory)
//! ---
//! Markdown instructions...
//!
//! ## Examples
//! - user: track this experiment / assistant: THOUGHT: ...
//! - user: another question
//!   assistant: another answer
//! ```
//!
//! Blank lines and `#` comment lines inside the front matter are ignored, as are
//! unknown keys. Text outside the `## Examples` section forms the instructions.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::{SkillBundle, SkillError, SkillExample, SkillTool};
use crate::tools::is_valid_tool_name;

fn malformed(line: usize, message: impl Into<String>) -> SkillError {
    SkillError::MalformedSkill { line, message: message.into() }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_list(value: &str, line: usize) -> Result<Vec<String>, SkillError> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| malformed(line, "triggers must be a bracketed list like [a, b]"))?;
    Ok(inner
        .split(',')
        .map(|t| t.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
        .filter(|t| !t.is_empty())
        .collect())
}

fn valid_skill_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn valid_command(cmd: &str) -> bool {
    !cmd.is_empty()
        && !cmd.starts_with('/')
        && !cmd.contains('\\')
        && !cmd.split('/').any(|seg| seg == ".." || seg.is_empty())
}

fn strip_field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let t = text.trim_start();
    let t = t.strip_prefix("- ").or_else(|| t.strip_prefix("/ ")).unwrap_or(t).trim_start();
    let rest = t.get(..key.len()).filter(|p| p.eq_ignore_ascii_case(key)).map(|_| &t[key.len()..])?;
    rest.strip_prefix(':').map(str::trim)
}

fn parse_examples(lines: &[(usize, &str)]) -> Result<Vec<SkillExample>, SkillError> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for &(no, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = strip_field(raw, "user") {
            if let Some((l, _)) = pending {
                return Err(malformed(l, "example has no assistant reply"));
            }
            match rest.split_once(" / ") {
                Some((u, a)) => match strip_field(a, "assistant") {
                    Some(a) => out.push(SkillExample { user: u.trim().into(), assistant: a.into() }),
                    None => return Err(malformed(no, "expected `assistant:` after ` / `")),
                },
                None => pending = Some((no, rest.to_string())),
            }
        } else if let Some(rest) = strip_field(raw, "assistant") {
            match pending.take() {
                Some((_, user)) => out.push(SkillExample { user, assistant: rest.into() }),
                None => return Err(malformed(no, "assistant reply without a user line")),
            }
        }
        // other prose inside the section is tolerated
    }
    if let Some((l, _)) = pending {
        return Err(malformed(l, "example has no assistant reply"));
    }
    Ok(out)
}

/// Parses SKILL.md bytes. `source_dir` is left empty for the caller to fill in.
pub fn parse_skill(bytes: &[u8]) -> Result<SkillBundle, SkillError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(1, format!("not valid UTF-8: {e}")))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).collect();
    if lines.first().map(|(_, l)| l.trim_end()) != Some("---") {
        return Err(malformed(1, "missing front matter: first line must be ---"));
    }
    let close = lines[1..]
        .iter()
        .position(|(_, l)| l.trim_end() == "---")
        .map(|i| i + 1)
        .ok_or_else(|| malformed(lines.len() + 1, "front matter is not closed with ---"))?;

    let mut name: Option<String> = None;
    let mut description = String::new();
    let mut version = String::new();
    let mut triggers: Option<Vec<String>> = None;
    let mut tool: Option<(usize, String)> = None;
    let mut command: Option<(usize, String)> = None;
    let mut seen: Vec<String> = Vec::new();
    for &(no, line) in &lines[1..close] {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once(':').ok_or_else(|| malformed(no, "expected `key: value`"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        if seen.contains(&key) {
            return Err(malformed(no, format!("duplicate key {key}")));
        }
        seen.push(key.clone());
        match key.as_str() {
            "name" => {
                if !valid_skill_name(value) {
                    return Err(malformed(no, format!("invalid skill name {value:?}")));
                }
                name = Some(value.to_string());
            }
            "description" => description = value.to_string(),
            "version" => version = value.to_string(),
            "triggers" => {
                let list = parse_list(value, no)?;
                if list.is_empty() {
                    return Err(malformed(no, "triggers must not be empty"));
                }
                triggers = Some(list);
            }
            "tool" => {
                if !is_valid_tool_name(value) {
                    return Err(malformed(no, format!("invalid tool name {value:?}")));
                }
                tool = Some((no, value.to_string()));
            }
            "command" => {
                if !valid_command(value) {
                    return Err(malformed(no, format!("command must be a relative path inside the skill: {value:?}")));
                }
                command = Some((no, value.to_string()));
            }
            _ => {}
        }
    }
    let close_line = lines[close].0;
    let name = name.ok_or_else(|| malformed(close_line, "front matter has no name"))?;
    let triggers = triggers.ok_or_else(|| malformed(close_line, "front matter has no triggers"))?;
    let tool = match (tool, command) {
        (Some((_, name)), Some((_, command))) => Some(SkillTool { name, command }),
        (None, None) => None,
        (Some((l, _)), None) | (None, Some((l, _))) => {
            return Err(malformed(l, "tool and command must be given together"))
        }
    };

    let mut instructions: Vec<&str> = Vec::new();
    let mut example_lines: Vec<(usize, &str)> = Vec::new();
    let mut in_examples = false;
    for &(no, line) in &lines[close + 1..] {
        let t = line.trim();
        if t.starts_with("## ") || t == "##" {
            in_examples = t[2..].trim().eq_ignore_ascii_case("examples");
            if in_examples {
                continue;
            }
        }
        if in_examples {
            example_lines.push((no, line));
        } else {
            instructions.push(line);
        }
    }
    let examples = parse_examples(&example_lines)?;

    Ok(SkillBundle {
        name,
        description,
        version,
        triggers,
        instructions: instructions.join("\n").trim().to_string(),
        examples,
        source_dir: PathBuf::new(),
        content_hash: content_hash(bytes),
        tool,
    })
}
