use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{PersistError, Workspace};
use crate::types::{AgentEvent, EventKind};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot read transcript: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Appends one JSON line to the session transcript; syncs to disk on `done`/`error`.
pub fn log_event(workspace: &Workspace, event: &AgentEvent) -> Result<(), PersistError> {
    let path = workspace.transcript_path(&event.session_id);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;
    }
    let mut line = serde_json::to_string(event).expect("events always serialize");
    line.push('\n');
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| PersistError::io(&path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| PersistError::io(&path, e))?;
    if matches!(event.kind, EventKind::Done | EventKind::Error) {
        f.sync_data().map_err(|e| PersistError::io(&path, e))?;
    }
    Ok(())
}

pub fn read_transcript(path: &Path) -> Result<Vec<AgentEvent>, TranscriptError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TranscriptError::Corrupt { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Clock, Id, StepClock};
    use serde_json::{Map, Value};

    #[test]
    fn round_trips_and_reports_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path());
        let clock = StepClock::fixed();
        let s = Id::from_u128(3);
        let mut events = Vec::new();
        for (i, k) in [EventKind::SessionStart, EventKind::Message, EventKind::Done].into_iter().enumerate() {
            let mut payload = Map::new();
            payload.insert("text".into(), Value::from(format!("line\n{i}")));
            let e = AgentEvent { seq: i as u64 + 1, kind: k, session_id: s.clone(), timestamp: clock.now(), payload };
            log_event(&ws, &e).unwrap();
            events.push(e);
        }
        let path = ws.transcript_path(&s);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
        assert_eq!(read_transcript(&path).unwrap(), events);

        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{not json\n").unwrap();
        match read_transcript(&path) {
            Err(TranscriptError::Corrupt { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
