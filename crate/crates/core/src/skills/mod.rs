//! Hot-loaded skill bundles from `<workspace>/skills/*/SKILL.md`.

mod exec;
mod parse;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::{ArgSchema, RegistrySnapshot, ToolExecutor, ToolOrigin, ToolRegistry, ToolSpec};

pub use exec::{SkillCommand, SKILL_COMMAND_TIMEOUT};
pub use parse::{content_hash, parse_skill};

pub const SKILL_FILE: &str = "SKILL.md";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkillError {
    #[error("malformed skill at line {line}: {message}")]
    MalformedSkill { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillExample {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTool {
    pub name: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillBundle {
    pub name: String,
    pub description: String,
    pub version: String,
    pub triggers: Vec<String>,
    pub instructions: String,
    pub examples: Vec<SkillExample>,
    pub source_dir: PathBuf,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<SkillTool>,
}

impl SkillBundle {
    /// Case-insensitive substring match of any trigger.
    pub fn matches(&self, text: &str) -> bool {
        let text = text.to_lowercase();
        self.triggers.iter().any(|t| text.contains(&t.to_lowercase()))
    }

    /// Instructions followed by the few-shot examples, as injected into the prompt.
    pub fn prompt_body(&self) -> String {
        let mut out = format!("### Skill: {}\n", self.name);
        if !self.instructions.is_empty() {
            out.push_str(&self.instructions);
            out.push('\n');
        }
        for ex in &self.examples {
            out.push_str(&format!("Example user: {}\nExample assistant: {}\n", ex.user, ex.assistant));
        }
        out
    }
}

/// Immutable active skill set with the version stamp of the scan that produced it.
#[derive(Debug, Clone, Default)]
pub struct SkillSet {
    pub version: u64,
    pub bundles: Vec<Arc<SkillBundle>>,
}

impl SkillSet {
    /// Active skills for `text`, in registration order.
    pub fn match_active(&self, text: &str) -> Vec<Arc<SkillBundle>> {
        self.bundles.iter().filter(|b| b.matches(text)).cloned().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.bundles.iter().map(|b| b.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanIssue {
    pub skill: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScanReport {
    /// New or changed bundles.
    pub registered: Vec<String>,
    pub removed: Vec<String>,
    pub unchanged: Vec<String>,
    pub errors: Vec<ScanIssue>,
    pub version: u64,
}

impl ScanReport {
    pub fn changed(&self) -> bool {
        !self.registered.is_empty() || !self.removed.is_empty()
    }
}

/// Owns the active skill set. Scans are serialized; readers clone an `Arc`.
pub struct SkillManager {
    skills_dir: PathBuf,
    workspace_root: PathBuf,
    active: RwLock<Arc<SkillSet>>,
    scan_lock: Mutex<()>,
}

impl SkillManager {
    pub fn new(workspace_root: impl Into<PathBuf>) -> Self {
        let workspace_root = workspace_root.into();
        SkillManager {
            skills_dir: workspace_root.join("skills"),
            workspace_root,
            active: RwLock::new(Arc::new(SkillSet::default())),
            scan_lock: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<SkillSet> {
        self.active.read().unwrap().clone()
    }

    /// Skill set and tool registry as of the same scan.
    pub fn snapshot_with(&self, registry: &ToolRegistry) -> (Arc<SkillSet>, RegistrySnapshot) {
        let _scan = self.scan_lock.lock().unwrap();
        (self.snapshot(), registry.snapshot())
    }

    fn read_dir(&self) -> Vec<(String, PathBuf)> {
        let Ok(entries) = std::fs::read_dir(&self.skills_dir) else { return Vec::new() };
        let mut dirs: Vec<(String, PathBuf)> = entries
            .filter_map(Result::ok)
            .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
            .filter_map(|e| Some((e.file_name().into_string().ok()?, e.path())))
            .filter(|(n, p)| !n.starts_with('.') && p.join(SKILL_FILE).is_file())
            .collect();
        dirs.sort();
        dirs
    }

    /// Re-reads the skills directory and swaps in the new set (and its tools) atomically.
    pub fn scan(&self, registry: &ToolRegistry) -> ScanReport {
        let _scan = self.scan_lock.lock().unwrap();
        let current = self.snapshot();
        let mut report = ScanReport::default();

        let mut parsed: BTreeMap<String, Arc<SkillBundle>> = BTreeMap::new();
        for (dir_name, dir) in self.read_dir() {
            let file = dir.join(SKILL_FILE);
            let bytes = match std::fs::read(&file) {
                Ok(b) => b,
                Err(e) => {
                    report.errors.push(ScanIssue { skill: dir_name, message: format!("cannot read {SKILL_FILE}: {e}") });
                    continue;
                }
            };
            let hash = content_hash(&bytes);
            if let Some(prev) = current.bundles.iter().find(|b| b.name == dir_name && b.content_hash == hash) {
                parsed.insert(dir_name, prev.clone());
                continue;
            }
            match parse_skill(&bytes) {
                Ok(mut b) if b.name == dir_name => {
                    b.source_dir = dir;
                    parsed.insert(dir_name, Arc::new(b));
                }
                Ok(b) => report.errors.push(ScanIssue {
                    skill: dir_name.clone(),
                    message: format!("skill name {} does not match directory {dir_name}", b.name),
                }),
                Err(e) => report.errors.push(ScanIssue { skill: dir_name, message: e.to_string() }),
            }
        }

        // existing order is kept; replacements stay in place, newcomers append in name order
        let mut next: Vec<Arc<SkillBundle>> = Vec::new();
        for old in &current.bundles {
            match parsed.remove(&old.name) {
                Some(b) if Arc::ptr_eq(&b, old) => {
                    report.unchanged.push(old.name.clone());
                    next.push(b);
                }
                Some(b) => {
                    report.registered.push(b.name.clone());
                    next.push(b);
                }
                None => report.removed.push(old.name.clone()),
            }
        }
        for (_, b) in parsed {
            report.registered.push(b.name.clone());
            next.push(b);
        }

        let mut version = current.version;
        if report.changed() {
            version += 1;
            let tools: Vec<(ToolSpec, Arc<dyn ToolExecutor>)> = next
                .iter()
                .filter_map(|b| {
                    let t = b.tool.as_ref()?;
                    let spec = ToolSpec {
                        name: t.name.clone(),
                        description: if b.description.is_empty() {
                            format!("Tool provided by skill {}", b.name)
                        } else {
                            b.description.clone()
                        },
                        arg_schema: ArgSchema::open(),
                        origin: ToolOrigin::Skill,
                    };
                    let exec = SkillCommand::new(&b.source_dir, &t.command, &self.workspace_root);
                    Some((spec, Arc::new(exec) as Arc<dyn ToolExecutor>))
                })
                .collect();
            for err in registry.replace_skill_tools(tools) {
                report.errors.push(ScanIssue { skill: String::new(), message: err.to_string() });
            }
            *self.active.write().unwrap() = Arc::new(SkillSet { version, bundles: next });
        }
        report.version = version;
        tracing::debug!(?report, "skills scanned");
        report
    }

    pub fn skills_dir(&self) -> &Path {
        &self.skills_dir
    }
}
