//! Human-readable rendering of transcripts.

use std::fmt::Write;

use dataclaw_core::stream::verbosity_filter;
use dataclaw_core::{AgentEvent, EventKind, Verbosity};
use serde_json::{Map, Value};

/// Characters of a tool observation shown before it is cut.
pub const OBSERVATION_PREVIEW: usize = 160;

/// One block per event that passes `verbosity`, in log order. At `final_only` the
/// turn header is dropped too, leaving answers and outcomes.
pub fn render(events: &[AgentEvent], verbosity: Verbosity) -> String {
    let shown = |e: &&AgentEvent| {
        verbosity_filter(verbosity, e.kind) && !(verbosity == Verbosity::FinalOnly && e.kind == EventKind::SessionStart)
    };
    let mut out = String::new();
    for e in events.iter().filter(shown) {
        render_event(&mut out, e);
    }
    out
}

fn field<'a>(p: &'a Map<String, Value>, key: &str) -> &'a Value {
    p.get(key).unwrap_or(&Value::Null)
}

fn text(v: &Value) -> &str {
    v.as_str().unwrap_or_default()
}

fn preview(s: &str) -> String {
    let mut chars = s.chars();
    let head: String = chars.by_ref().take(OBSERVATION_PREVIEW).collect();
    if chars.next().is_some() {
        format!("{head}...")
    } else {
        head
    }
}

/// Continuation lines of multi-line text are indented under the header.
fn indent(s: &str) -> String {
    s.replace('\n', "\n    ")
}

fn render_event(out: &mut String, e: &AgentEvent) {
    let p = &e.payload;
    let head = format!("[{}] #{} {}", e.timestamp, e.seq, e.kind.as_str());
    let _ = match e.kind {
        EventKind::SessionStart => {
            let skills: Vec<&str> = field(p, "active_skills").as_array().into_iter().flatten().filter_map(Value::as_str).collect();
            let skills = if skills.is_empty() { "none".to_string() } else { skills.join(", ") };
            writeln!(out, "{head} session {} turn {}: {}", e.session_id, field(p, "turn"), indent(text(field(p, "text"))))
                .and_then(|_| writeln!(out, "    skills: {skills}"))
        }
        EventKind::Thinking => writeln!(out, "{head} step {}: {}", field(p, "step"), indent(text(field(p, "thought")))),
        EventKind::ToolCall => writeln!(out, "{head} step {}: {} {}", field(p, "step"), text(field(p, "tool")), field(p, "args")),
        EventKind::ToolResult => {
            let mark = if field(p, "is_error") == &Value::Bool(true) { " (error)" } else { "" };
            writeln!(out, "{head} step {}: {}{mark} -> {}", field(p, "step"), text(field(p, "tool")), indent(&preview(text(field(p, "observation")))))
        }
        EventKind::Message => {
            let mut r = writeln!(out, "{head} step {}: {}", field(p, "step"), indent(text(field(p, "text"))));
            for a in field(p, "artifacts").as_array().into_iter().flatten() {
                r = r.and_then(|_| writeln!(out, "    artifact: {}", text(a)));
            }
            r
        }
        EventKind::Artifact => writeln!(out, "{head} {}", Value::Object(p.clone())),
        EventKind::Done => writeln!(out, "{head} after {} steps", field(p, "steps")),
        EventKind::Error => {
            writeln!(out, "{head} {} after {} steps: {}", text(field(p, "reason")), field(p, "steps"), indent(text(field(p, "detail"))))
        }
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use dataclaw_core::types::{Clock, Id, StepClock};
    use serde_json::json;

    fn event(seq: u64, kind: EventKind, payload: Value) -> AgentEvent {
        let payload = payload.as_object().unwrap().clone();
        AgentEvent { seq, kind, session_id: Id::from_u128(1), timestamp: StepClock::fixed().now(), payload }
    }

    #[test]
    fn full_trace_shows_the_turn_header() {
        let e = event(1, EventKind::SessionStart, json!({"turn": 2, "text": "hi", "active_skills": ["a", "b"]}));
        assert_eq!(
            render(&[e], Verbosity::Progress),
            "[2026-01-01T00:00:00.000Z] #1 session_start session 00000000000000000000000000000001 turn 2: hi\n    skills: a, b\n"
        );
    }

    #[test]
    fn long_observations_are_cut() {
        let obs = "x".repeat(OBSERVATION_PREVIEW + 1);
        let e = event(4, EventKind::ToolResult, json!({"step": 1, "tool": "t", "observation": obs, "is_error": false}));
        let line = render(&[e], Verbosity::FullTrace);
        assert!(line.ends_with(&format!("{}...\n", "x".repeat(OBSERVATION_PREVIEW))));
    }

    #[test]
    fn final_only_keeps_the_answer() {
        let events = [
            event(1, EventKind::SessionStart, json!({"turn": 1, "text": "hi", "active_skills": []})),
            event(2, EventKind::Thinking, json!({"step": 1, "thought": "hm"})),
            event(3, EventKind::Message, json!({"step": 1, "text": "hello\nthere", "artifacts": ["a.svg"]})),
            event(4, EventKind::Done, json!({"steps": 1, "outcome": "final"})),
        ];
        let out = render(&events, Verbosity::FinalOnly);
        assert_eq!(
            out,
            "[2026-01-01T00:00:00.000Z] #3 message step 1: hello\n    there\n    artifact: a.svg\n\
             [2026-01-01T00:00:00.000Z] #4 done after 1 steps\n"
        );
    }
}
