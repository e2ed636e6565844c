//! Domain types shared across the runtime: messages, sessions, events and artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// ISO-8601 UTC timestamp with millisecond precision, e.g. `2026-01-01T00:00:00.000Z`.
///
/// Stored in rendered form so that lexicographic order equals chronological order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(String);

impl Timestamp {
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_datetime(Utc::now())
    }
}

/// Deterministic clock: every reading advances by one millisecond from a fixed origin.
#[derive(Debug)]
pub struct StepClock {
    origin: DateTime<Utc>,
    ticks: AtomicU64,
}

impl StepClock {
    pub fn new(origin: DateTime<Utc>) -> Self {
        StepClock { origin, ticks: AtomicU64::new(0) }
    }

    /// Origin at 2026-01-01T00:00:00.000Z.
    pub fn fixed() -> Self {
        Self::new(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for StepClock {
    fn now(&self) -> Timestamp {
        let t = self.ticks.fetch_add(1, Ordering::SeqCst);
        Timestamp::from_datetime(self.origin + Duration::milliseconds(t as i64))
    }
}

/// 128-bit identifier rendered as 32 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Id(String);

impl Id {
    pub fn random() -> Self {
        Id(format!("{:032x}", rand::random::<u128>()))
    }

    pub fn from_u128(v: u128) -> Self {
        Id(format!("{v:032x}"))
    }

    /// Stable id derived from arbitrary key parts (first 128 bits of SHA-256).
    pub fn derived(parts: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        for p in parts {
            hasher.update(p.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        Id(hex::encode(&digest[..16]))
    }

    /// Accepts any non-empty string made of `[A-Za-z0-9_-]`.
    pub fn parse(s: &str) -> Option<Self> {
        let ok = !s.is_empty()
            && s.len() <= 128
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        ok.then(|| Id(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait IdGen: Send + Sync {
    fn next_id(&self) -> Id;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdGen for RandomIds {
    fn next_id(&self) -> Id {
        Id::random()
    }
}

/// Counter-based ids for reproducible runs.
#[derive(Debug, Default)]
pub struct SequentialIds {
    next: Mutex<u128>,
}

impl SequentialIds {
    pub fn starting_at(v: u128) -> Self {
        SequentialIds { next: Mutex::new(v) }
    }
}

impl IdGen for SequentialIds {
    fn next_id(&self) -> Id {
        let mut n = self.next.lock().unwrap();
        *n += 1;
        Id::from_u128(*n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
    System,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Agent => "agent",
            Role::System => "system",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub id: Id,
    pub session_id: Id,
    pub channel_id: String,
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<String>,
    pub timestamp: Timestamp,
    /// Tool messages carry `tool`; compacted summaries carry `tag = compacted`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl ChatMessage {
    pub fn new(
        id: Id,
        session_id: Id,
        channel_id: impl Into<String>,
        role: Role,
        text: impl Into<String>,
        timestamp: Timestamp,
    ) -> Self {
        ChatMessage {
            id,
            session_id,
            channel_id: channel_id.into(),
            role,
            text: text.into(),
            attachments: Vec::new(),
            timestamp,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Running,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: Id,
    pub channel_id: String,
    pub status: SessionStatus,
    pub created_at: Timestamp,
    pub turn_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStart,
    Thinking,
    ToolCall,
    ToolResult,
    Message,
    Artifact,
    Error,
    Done,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::SessionStart,
        EventKind::Thinking,
        EventKind::ToolCall,
        EventKind::ToolResult,
        EventKind::Message,
        EventKind::Artifact,
        EventKind::Error,
        EventKind::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStart => "session_start",
            EventKind::Thinking => "thinking",
            EventKind::ToolCall => "tool_call",
            EventKind::ToolResult => "tool_result",
            EventKind::Message => "message",
            EventKind::Artifact => "artifact",
            EventKind::Error => "error",
            EventKind::Done => "done",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One element of a session's trace. Field order here is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub session_id: Id,
    pub timestamp: Timestamp,
    pub payload: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: Id,
    pub session_id: Id,
    pub relative_path: String,
    pub media_type: String,
    pub byte_length: u64,
    pub created_at: Timestamp,
}
