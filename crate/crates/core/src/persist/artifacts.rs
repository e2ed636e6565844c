use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use super::{PersistError, Workspace};
use crate::types::{Artifact, Clock, Id, IdGen};

/// Rejects names that could leave the session's artifact directory.
pub fn sanitize_artifact_name(name: &str) -> Result<&str, PersistError> {
    let bad = name.is_empty()
        || name.len() > 200
        || name.starts_with('.')
        || name.contains(['/', '\\', '\0'])
        || name.chars().any(char::is_control);
    if bad {
        Err(PersistError::BadName(name.to_string()))
    } else {
        Ok(name)
    }
}

fn candidate(name: &str, n: usize) -> String {
    if n == 1 {
        return name.to_string();
    }
    match name.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => format!("{stem}-{n}.{ext}"),
        _ => format!("{name}-{n}"),
    }
}

/// Writes artifacts under `artifacts/<session>/` and keeps an id → record catalog.
#[derive(Clone)]
pub struct ArtifactStore {
    workspace: Workspace,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdGen>,
    catalog: Arc<Mutex<HashMap<Id, Artifact>>>,
}

impl ArtifactStore {
    pub fn new(workspace: Workspace, clock: Arc<dyn Clock>, ids: Arc<dyn IdGen>) -> Self {
        ArtifactStore { workspace, clock, ids, catalog: Default::default() }
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Atomic write; a taken name gets `-2`, `-3`, ... before its extension.
    pub fn save(&self, session_id: &Id, name: &str, bytes: &[u8], media_type: &str) -> Result<Artifact, PersistError> {
        let name = sanitize_artifact_name(name)?;
        let dir = self.workspace.session_artifacts_dir(session_id);
        std::fs::create_dir_all(&dir).map_err(|e| PersistError::io(&dir, e))?;
        // confinement check on the directory itself
        let rel_dir = self.workspace.relative(&dir).ok_or_else(|| PersistError::BadName(name.into()))?;
        self.workspace.resolve(&rel_dir)?;

        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| PersistError::io(&dir, e))?;
        tmp.write_all(bytes).map_err(|e| PersistError::io(&dir, e))?;
        tmp.as_file().sync_all().map_err(|e| PersistError::io(&dir, e))?;
        let mut n = 1;
        let final_path = loop {
            let path = dir.join(candidate(name, n));
            match tmp.persist_noclobber(&path) {
                Ok(_) => break path,
                Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => {
                    tmp = e.file;
                    n += 1;
                }
                Err(e) => return Err(PersistError::io(&path, e.error)),
            }
        };
        let artifact = Artifact {
            id: self.ids.next_id(),
            session_id: session_id.clone(),
            relative_path: self.workspace.relative(&final_path).expect("inside workspace"),
            media_type: media_type.to_string(),
            byte_length: bytes.len() as u64,
            created_at: self.clock.now(),
        };
        self.catalog.lock().unwrap().insert(artifact.id.clone(), artifact.clone());
        Ok(artifact)
    }

    pub fn get(&self, id: &Id) -> Option<Artifact> {
        self.catalog.lock().unwrap().get(id).cloned()
    }

    /// Looks up by id or by workspace-relative path within one session.
    pub fn find(&self, session_id: &Id, id_or_path: &str) -> Option<Artifact> {
        let catalog = self.catalog.lock().unwrap();
        catalog
            .values()
            .find(|a| &a.session_id == session_id && (a.id.as_str() == id_or_path || a.relative_path == id_or_path))
            .cloned()
    }

    pub fn list(&self, session_id: &Id) -> Vec<Artifact> {
        let mut v: Vec<Artifact> =
            self.catalog.lock().unwrap().values().filter(|a| &a.session_id == session_id).cloned().collect();
        v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.relative_path.cmp(&b.relative_path)));
        v
    }

    pub fn read(&self, artifact: &Artifact) -> Result<Vec<u8>, PersistError> {
        let path = self.workspace.resolve(&artifact.relative_path)?;
        std::fs::read(&path).map_err(|e| PersistError::io(&path, e))
    }

    pub fn absolute_path(&self, artifact: &Artifact) -> Result<std::path::PathBuf, PersistError> {
        Ok(self.workspace.resolve(&artifact.relative_path)?)
    }
}
