use crate::types::AgentEvent;

/// Comment frame sent after 15 s of silence.
pub const HEARTBEAT: &str = ": ping\n\n";

/// `id: <seq>\nevent: <kind>\ndata: <json>\n\n`, where `<json>` is the event's
/// single-line serialization (`seq`, `kind`, `session_id`, `timestamp`, `payload`).
pub fn encode_sse(event: &AgentEvent) -> String {
    let data = serde_json::to_string(event).expect("events always serialize");
    format!("id: {}\nevent: {}\ndata: {}\n\n", event.seq, event.kind.as_str(), data)
}
