use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, Weak};

use serde_json::{Map, Value};
use thiserror::Error;
use tokio::sync::Notify;

use super::verbosity_filter;
use crate::config::Verbosity;
use crate::types::{AgentEvent, EventKind, Id};

/// Live events a subscriber may have queued before the oldest are dropped.
pub const SUBSCRIBER_BUFFER: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("sequence violation for session {session}: expected {expected}, got {got}")]
    SeqViolation { session: Id, expected: u64, got: u64 },
    #[error("unknown session {0}")]
    UnknownSession(Id),
}

pub trait EventSink: Send + Sync {
    fn emit(&self, event: AgentEvent) -> Result<(), StreamError>;
    /// Highest seq logged for the session, 0 when nothing was logged yet.
    fn last_seq(&self, session_id: &Id) -> u64;
}

#[derive(Default)]
struct SessionLog {
    events: Vec<AgentEvent>,
    subscribers: Vec<Weak<Shared>>,
}

struct Shared {
    verbosity: Verbosity,
    state: Mutex<Queue>,
    notify: Notify,
}

#[derive(Default)]
struct Queue {
    buffer: VecDeque<AgentEvent>,
    /// Seq range dropped on overflow and the timestamp of the last dropped event.
    gap: Option<(u64, u64, crate::types::Timestamp)>,
}

impl Shared {
    fn offer(&self, event: &AgentEvent) {
        let mut q = self.state.lock().unwrap();
        if q.buffer.len() >= SUBSCRIBER_BUFFER {
            let dropped = q.buffer.pop_front().expect("buffer is full");
            q.gap = Some(match q.gap.take() {
                Some((from, _, _)) => (from, dropped.seq, dropped.timestamp),
                None => (dropped.seq, dropped.seq, dropped.timestamp),
            });
        }
        q.buffer.push_back(event.clone());
        drop(q);
        self.notify.notify_one();
    }
}

/// Full, unfiltered per-session logs. Filtering happens per subscription.
#[derive(Default)]
pub struct EventBus {
    sessions: Mutex<HashMap<Id, SessionLog>>,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an empty log so the session can be subscribed to before its first event.
    pub fn open_session(&self, session_id: &Id) {
        self.sessions.lock().unwrap().entry(session_id.clone()).or_default();
    }

    pub fn has_session(&self, session_id: &Id) -> bool {
        self.sessions.lock().unwrap().contains_key(session_id)
    }

    pub fn events(&self, session_id: &Id) -> Vec<AgentEvent> {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .map(|l| l.events.clone())
            .unwrap_or_default()
    }

    pub fn subscriber_count(&self, session_id: &Id) -> usize {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .map(|l| l.subscribers.iter().filter(|w| w.strong_count() > 0).count())
            .unwrap_or(0)
    }

    /// Replays logged events with `seq > from_seq` that pass the filter, then
    /// continues with live events. Replay and registration happen under one lock,
    /// so nothing is duplicated or skipped across the boundary.
    pub fn subscribe(
        &self,
        session_id: &Id,
        verbosity: Verbosity,
        from_seq: u64,
    ) -> Result<Subscription, StreamError> {
        let mut sessions = self.sessions.lock().unwrap();
        let log = sessions
            .get_mut(session_id)
            .ok_or_else(|| StreamError::UnknownSession(session_id.clone()))?;
        let replay: VecDeque<AgentEvent> = log
            .events
            .iter()
            .filter(|e| e.seq > from_seq && verbosity_filter(verbosity, e.kind))
            .cloned()
            .collect();
        let shared = Arc::new(Shared { verbosity, state: Mutex::new(Queue::default()), notify: Notify::new() });
        log.subscribers.retain(|w| w.strong_count() > 0);
        log.subscribers.push(Arc::downgrade(&shared));
        Ok(Subscription {
            session_id: session_id.clone(),
            verbosity,
            replay,
            shared,
            last_delivered_seq: from_seq,
        })
    }
}

impl EventSink for EventBus {
    fn emit(&self, event: AgentEvent) -> Result<(), StreamError> {
        let mut sessions = self.sessions.lock().unwrap();
        let log = sessions.entry(event.session_id.clone()).or_default();
        let expected = log.events.last().map_or(1, |e| e.seq + 1);
        if event.seq != expected {
            return Err(StreamError::SeqViolation {
                session: event.session_id.clone(),
                expected,
                got: event.seq,
            });
        }
        log.subscribers.retain(|w| w.strong_count() > 0);
        for sub in log.subscribers.iter().filter_map(Weak::upgrade) {
            if verbosity_filter(sub.verbosity, event.kind) {
                sub.offer(&event);
            }
        }
        log.events.push(event);
        Ok(())
    }

    fn last_seq(&self, session_id: &Id) -> u64 {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .and_then(|l| l.events.last())
            .map_or(0, |e| e.seq)
    }
}

/// A filtered view of one session's events. Dropping it unsubscribes.
pub struct Subscription {
    session_id: Id,
    verbosity: Verbosity,
    replay: VecDeque<AgentEvent>,
    shared: Arc<Shared>,
    last_delivered_seq: u64,
}

impl Subscription {
    pub fn session_id(&self) -> &Id {
        &self.session_id
    }

    pub fn verbosity(&self) -> Verbosity {
        self.verbosity
    }

    pub fn last_delivered_seq(&self) -> u64 {
        self.last_delivered_seq
    }

    pub fn try_next(&mut self) -> Option<AgentEvent> {
        let next = self.replay.pop_front().or_else(|| {
            let mut q = self.shared.state.lock().unwrap();
            if let Some((from, to, ts)) = q.gap.take() {
                return Some(gap_event(&self.session_id, from, to, ts));
            }
            q.buffer.pop_front()
        })?;
        debug_assert!(next.seq > self.last_delivered_seq);
        self.last_delivered_seq = next.seq;
        Some(next)
    }

    /// Waits for the next event.
    pub async fn next(&mut self) -> AgentEvent {
        loop {
            if let Some(e) = self.try_next() {
                return e;
            }
            self.shared.notify.notified().await;
        }
    }

    /// Everything currently available without waiting.
    pub fn drain(&mut self) -> Vec<AgentEvent> {
        std::iter::from_fn(|| self.try_next()).collect()
    }
}

fn gap_event(session: &Id, from: u64, to: u64, ts: crate::types::Timestamp) -> AgentEvent {
    let mut payload = Map::new();
    payload.insert("synthetic".into(), Value::Bool(true));
    payload.insert("reason".into(), Value::from("subscriber buffer overflow"));
    payload.insert("dropped_from".into(), Value::from(from));
    payload.insert("dropped_to".into(), Value::from(to));
    AgentEvent { seq: to, kind: EventKind::Error, session_id: session.clone(), timestamp: ts, payload }
}
