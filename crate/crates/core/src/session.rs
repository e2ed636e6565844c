//! Shared session table with a concurrency cap and one-turn-at-a-time gating.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::types::{Clock, Id, IdGen, Session, SessionStatus};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("capacity exceeded: {active} of {capacity} sessions active")]
    CapacityExceeded { active: usize, capacity: usize },
    #[error("unknown session {0}")]
    UnknownSession(Id),
    #[error("session {0} is closed")]
    Closed(Id),
    #[error("session {0} already has a turn in flight")]
    Busy(Id),
}

/// Sessions keyed by id. Closed sessions stay listed but do not count against capacity.
#[derive(Clone)]
pub struct SessionTable {
    inner: Arc<Mutex<HashMap<Id, Session>>>,
    capacity: Arc<Mutex<usize>>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdGen>,
}

impl SessionTable {
    pub fn new(capacity: usize, clock: Arc<dyn Clock>, ids: Arc<dyn IdGen>) -> Self {
        SessionTable {
            inner: Arc::new(Mutex::new(HashMap::new())),
            capacity: Arc::new(Mutex::new(capacity)),
            clock,
            ids,
        }
    }

    pub fn set_capacity(&self, capacity: usize) {
        *self.capacity.lock().unwrap() = capacity;
    }

    pub fn capacity(&self) -> usize {
        *self.capacity.lock().unwrap()
    }

    pub fn new_session(&self, channel_id: &str) -> Result<Session, SessionError> {
        let id = self.ids.next_id();
        self.create_with_id(id, channel_id)
    }

    /// Returns the existing session for `id` or registers a new one under that id.
    pub fn get_or_create(&self, id: &Id, channel_id: &str) -> Result<Session, SessionError> {
        if let Some(s) = self.get(id) {
            return Ok(s);
        }
        match self.create_with_id(id.clone(), channel_id) {
            // lost a race with another creator
            Err(SessionError::Busy(_)) => self.get(id).ok_or(SessionError::UnknownSession(id.clone())),
            other => other,
        }
    }

    fn create_with_id(&self, id: Id, channel_id: &str) -> Result<Session, SessionError> {
        let capacity = self.capacity();
        let mut map = self.inner.lock().unwrap();
        if map.contains_key(&id) {
            return Err(SessionError::Busy(id));
        }
        let active = map.values().filter(|s| s.status != SessionStatus::Closed).count();
        if active >= capacity {
            return Err(SessionError::CapacityExceeded { active, capacity });
        }
        let session = Session {
            id: id.clone(),
            channel_id: channel_id.to_string(),
            status: SessionStatus::Idle,
            created_at: self.clock.now(),
            turn_count: 0,
        };
        map.insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &Id) -> Option<Session> {
        self.inner.lock().unwrap().get(id).cloned()
    }

    pub fn list(&self) -> Vec<Session> {
        let mut v: Vec<Session> = self.inner.lock().unwrap().values().cloned().collect();
        v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        v
    }

    pub fn active_count(&self) -> usize {
        self.inner.lock().unwrap().values().filter(|s| s.status != SessionStatus::Closed).count()
    }

    pub fn running_count(&self) -> usize {
        self.inner.lock().unwrap().values().filter(|s| s.status == SessionStatus::Running).count()
    }

    /// Marks the session running. Fails if it is closed or already running.
    pub fn begin_turn(&self, id: &Id) -> Result<Session, SessionError> {
        let mut map = self.inner.lock().unwrap();
        let s = map.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.clone()))?;
        match s.status {
            SessionStatus::Closed => Err(SessionError::Closed(id.clone())),
            SessionStatus::Running => Err(SessionError::Busy(id.clone())),
            SessionStatus::Idle => {
                s.status = SessionStatus::Running;
                Ok(s.clone())
            }
        }
    }

    pub fn end_turn(&self, id: &Id) {
        if let Some(s) = self.inner.lock().unwrap().get_mut(id) {
            s.turn_count += 1;
            if s.status == SessionStatus::Running {
                s.status = SessionStatus::Idle;
            }
        }
    }

    pub fn close(&self, id: &Id) -> Result<Session, SessionError> {
        let mut map = self.inner.lock().unwrap();
        let s = map.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.clone()))?;
        s.status = SessionStatus::Closed;
        Ok(s.clone())
    }
}
