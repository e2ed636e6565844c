//! Workspace layout, session transcripts and the artifact store.

mod artifacts;
mod transcript;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::AgentConfig;
use crate::memory::{MemoryFileKind, MemoryFiles};
use crate::sandbox::{validate_workspace_path, PathEscape};
use crate::types::Id;

pub use artifacts::{sanitize_artifact_name, ArtifactStore};
pub use transcript::{log_event, read_transcript, TranscriptError};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io failure at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    PathEscape(#[from] PathEscape),
    #[error("invalid artifact name {0:?}")]
    BadName(String),
}

impl PersistError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PersistError::Io { path: path.into(), source }
    }
}

/// Fixed layout under one root directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitReport {
    pub workspace: Workspace,
    /// Paths created by this call; empty when the layout already existed.
    pub created: Vec<PathBuf>,
}

impl InitReport {
    pub fn already_initialized(&self) -> bool {
        self.created.is_empty()
    }
}

impl Workspace {
    /// Opens an existing workspace without touching the filesystem.
    pub fn open(root: impl AsRef<Path>) -> Self {
        let root = std::path::absolute(root.as_ref()).unwrap_or_else(|_| root.as_ref().to_path_buf());
        Workspace { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config")
    }

    pub fn skills_dir(&self) -> PathBuf {
        self.root.join("skills")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    pub fn transcript_path(&self, session_id: &Id) -> PathBuf {
        self.sessions_dir().join(session_id.as_str()).join("transcript.jsonl")
    }

    pub fn session_artifacts_dir(&self, session_id: &Id) -> PathBuf {
        self.artifacts_dir().join(session_id.as_str())
    }

    pub fn memory_files(&self) -> MemoryFiles {
        MemoryFiles::new(&self.root)
    }

    pub fn resolve(&self, relative: &str) -> Result<PathBuf, PathEscape> {
        validate_workspace_path(relative, &self.root)
    }

    /// Workspace-relative, '/'-separated form of a path inside the root.
    pub fn relative(&self, path: &Path) -> Option<String> {
        let rel = path.strip_prefix(&self.root).ok()?;
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        Some(parts.join("/"))
    }

    pub fn is_initialized(&self) -> bool {
        self.config_path().is_file() && self.skills_dir().is_dir()
    }
}

/// Creates whatever is missing of the layout; existing files are never rewritten.
pub fn init_workspace(root: impl AsRef<Path>) -> Result<InitReport, PersistError> {
    let ws = Workspace::open(root);
    let mut created = Vec::new();
    for dir in [ws.root().to_path_buf(), ws.skills_dir(), ws.sessions_dir(), ws.artifacts_dir(), ws.data_dir()] {
        if !dir.is_dir() {
            std::fs::create_dir_all(&dir).map_err(|e| PersistError::io(&dir, e))?;
            created.push(dir);
        }
    }
    let files = [
        (ws.config_path(), AgentConfig::default().to_file_string()),
        (ws.root().join(MemoryFileKind::Memory.file_name()), crate::memory::MEMORY_HEADER.to_string()),
        (ws.root().join(MemoryFileKind::Agents.file_name()), String::new()),
        (ws.root().join(MemoryFileKind::Souls.file_name()), crate::memory::SOULS_TEMPLATE.to_string()),
    ];
    for (path, content) in files {
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                f.write_all(content.as_bytes()).map_err(|e| PersistError::io(&path, e))?;
                created.push(path);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {}
            Err(e) => return Err(PersistError::io(&path, e)),
        }
    }
    Ok(InitReport { workspace: ws, created })
}
