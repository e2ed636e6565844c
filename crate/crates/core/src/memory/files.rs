use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::MemoryError;
use crate::types::{Id, Timestamp};

pub const MEMORY_HEADER: &str = "# MEMORY\n";
pub const SOULS_TEMPLATE: &str = "# SOULS\n\n## Preferences\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Finding,
    Artifact,
    Note,
}

impl MemoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::Finding => "finding",
            MemoryKind::Artifact => "artifact",
            MemoryKind::Note => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMemoryEntry {
    pub session_id: Id,
    pub recorded_at: Timestamp,
    pub kind: MemoryKind,
    pub text: String,
}

impl GlobalMemoryEntry {
    pub fn bullet(&self) -> Result<String, MemoryError> {
        if self.text.contains(['\n', '\r']) {
            return Err(MemoryError::MultilineText);
        }
        Ok(format!("- {}: {}\n", self.kind.as_str(), self.text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryFileKind {
    Memory,
    Agents,
    Souls,
}

impl MemoryFileKind {
    pub fn file_name(self) -> &'static str {
        match self {
            MemoryFileKind::Memory => "MEMORY.md",
            MemoryFileKind::Agents => "AGENTS.md",
            MemoryFileKind::Souls => "SOULS.md",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "memory" => Some(MemoryFileKind::Memory),
            "agents" => Some(MemoryFileKind::Agents),
            "souls" => Some(MemoryFileKind::Souls),
            _ => None,
        }
    }
}

/// Access to the workspace memory files. All writes go through one lock and
/// land via temp-file + rename, so readers only ever see complete files.
#[derive(Debug)]
pub struct MemoryFiles {
    root: PathBuf,
    writer: Mutex<()>,
}

impl MemoryFiles {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        MemoryFiles { root: root.into(), writer: Mutex::new(()) }
    }

    pub fn path(&self, kind: MemoryFileKind) -> PathBuf {
        self.root.join(kind.file_name())
    }

    /// File contents, or an empty string when the file does not exist.
    pub fn read(&self, kind: MemoryFileKind) -> Result<String, MemoryError> {
        read_or_empty(&self.path(kind))
    }

    pub fn write(&self, kind: MemoryFileKind, content: &str) -> Result<(), MemoryError> {
        let _guard = self.writer.lock().unwrap();
        write_atomic(&self.path(kind), content.as_bytes())
    }

    /// Returns `(AGENTS.md, SOULS.md)` verbatim; missing files read as empty.
    pub fn load_global_blocks(&self) -> Result<(String, String), MemoryError> {
        Ok((self.read(MemoryFileKind::Agents)?, self.read(MemoryFileKind::Souls)?))
    }

    /// Appends one bullet to MEMORY.md under the entry's session heading.
    ///
    /// The file only ever grows. When another session wrote last, a fresh
    /// `## Session` heading is appended for this one.
    pub fn record_global(&self, entry: &GlobalMemoryEntry) -> Result<(), MemoryError> {
        let bullet = entry.bullet()?;
        let _guard = self.writer.lock().unwrap();
        let path = self.path(MemoryFileKind::Memory);
        let mut content = read_or_empty(&path)?;
        if content.is_empty() {
            content.push_str(MEMORY_HEADER);
        }
        if !content.ends_with('\n') {
            content.push('\n');
        }
        let prefix = format!("## Session {} ", entry.session_id);
        let last_heading = content.lines().rfind(|l| l.starts_with("## "));
        if !last_heading.is_some_and(|h| h.starts_with(&prefix)) {
            content.push_str(&format!("\n## Session {} — {}\n", entry.session_id, entry.recorded_at));
        }
        content.push_str(&bullet);
        write_atomic(&path, content.as_bytes())
    }
}

fn read_or_empty(path: &Path) -> Result<String, MemoryError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), MemoryError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| MemoryError::Io(e.error))?;
    Ok(())
}
