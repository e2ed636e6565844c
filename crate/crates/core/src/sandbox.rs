//! Workspace path confinement.

use std::path::{Component, Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("path escapes the workspace: {0}")]
pub struct PathEscape(pub String);

/// Lexically normalizes `path` against `root` and returns the absolute result
/// iff it stays inside `root`. Symlinks are not followed.
pub fn validate_workspace_path(path: &str, root: &Path) -> Result<PathBuf, PathEscape> {
    let root = absolute_root(root);
    let candidate = Path::new(path);
    let joined = if candidate.is_absolute() { candidate.to_path_buf() } else { root.join(candidate) };

    let mut out = PathBuf::new();
    for comp in joined.components() {
        match comp {
            Component::Prefix(p) => out.push(p.as_os_str()),
            Component::RootDir => out.push(Component::RootDir.as_os_str()),
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    return Err(PathEscape(path.to_string()));
                }
            }
            Component::Normal(s) => out.push(s),
        }
    }
    if out.starts_with(&root) {
        Ok(out)
    } else {
        Err(PathEscape(path.to_string()))
    }
}

fn absolute_root(root: &Path) -> PathBuf {
    let abs = std::path::absolute(root).unwrap_or_else(|_| root.to_path_buf());
    let mut out = PathBuf::new();
    for comp in abs.components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}
