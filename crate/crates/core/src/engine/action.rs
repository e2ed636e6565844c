use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Action {
    ToolCall { tool: String, args: Map<String, Value> },
    Final { text: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparsable action: {0}")]
pub struct UnparsableAction(pub String);

const MARKERS: [&str; 4] = ["THOUGHT:", "ACTION:", "FINAL:", "OBSERVATION:"];

fn marker_of(line: &str) -> Option<(&'static str, &str)> {
    let t = line.trim_start();
    MARKERS.iter().find_map(|m| t.strip_prefix(m).map(|rest| (*m, rest)))
}

/// Text after the marker on line `i` plus following lines up to the next marker line.
fn block(lines: &[&str], i: usize, first: &str) -> String {
    let mut parts = vec![first];
    for l in &lines[i + 1..] {
        if marker_of(l).is_some() {
            break;
        }
        parts.push(l);
    }
    parts.join("\n").trim().to_string()
}

/// Splits model output into its thought and the last ACTION or FINAL.
pub fn parse_action(output: &str) -> Result<(String, Action), UnparsableAction> {
    let lines: Vec<&str> = output.lines().collect();
    let (idx, marker, rest) = lines
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| match marker_of(l) {
            Some((m @ ("ACTION:" | "FINAL:"), rest)) => Some((i, m, rest)),
            _ => None,
        })
        .ok_or_else(|| UnparsableAction("no ACTION: or FINAL: line".into()))?;

    let thought = lines[..idx]
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| match marker_of(l) {
            Some(("THOUGHT:", rest)) => Some(block(&lines[..idx], i, rest)),
            _ => None,
        })
        .unwrap_or_default();

    let action = if marker == "FINAL:" {
        let text = block(&lines, idx, rest);
        if text.is_empty() {
            return Err(UnparsableAction("FINAL: has no text".into()));
        }
        Action::Final { text }
    } else {
        let tail = std::iter::once(rest).chain(lines[idx + 1..].iter().copied()).collect::<Vec<_>>().join("\n");
        let value = serde_json::Deserializer::from_str(tail.trim_start())
            .into_iter::<Value>()
            .next()
            .ok_or_else(|| UnparsableAction("ACTION: has no JSON".into()))?
            .map_err(|e| UnparsableAction(format!("ACTION JSON: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(UnparsableAction("ACTION must be a JSON object".into()));
        };
        let tool = match obj.remove("tool") {
            Some(Value::String(t)) if !t.is_empty() => t,
            _ => return Err(UnparsableAction("ACTION needs a \"tool\" string".into())),
        };
        let args = match obj.remove("args") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => return Err(UnparsableAction("ACTION \"args\" must be an object".into())),
        };
        Action::ToolCall { tool, args }
    };
    Ok((thought, action))
}
