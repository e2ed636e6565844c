//! Per-session event log with fan-out to verbosity-filtered subscribers.

mod bus;
mod sse;

pub use bus::{EventBus, EventSink, StreamError, Subscription, SUBSCRIBER_BUFFER};
pub use sse::{encode_sse, HEARTBEAT};

use crate::config::Verbosity;
use crate::types::EventKind;

pub fn verbosity_filter(level: Verbosity, kind: EventKind) -> bool {
    use EventKind::*;
    match kind {
        SessionStart | Message | Artifact | Error | Done => true,
        ToolCall | ToolResult => matches!(level, Verbosity::Progress | Verbosity::FullTrace),
        Thinking => level == Verbosity::FullTrace,
    }
}
