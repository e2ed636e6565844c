use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, RwLock};

use serde_json::Value;
use thiserror::Error;

use super::{is_valid_tool_name, ToolContext, ToolExecutor, ToolOrigin, ToolSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("tool {0} is already registered")]
    DuplicateName(String),
    #[error("invalid tool name {0:?}: expected lowercase snake_case")]
    InvalidName(String),
}

pub struct RegisteredTool {
    pub spec: ToolSpec,
    pub executor: Arc<dyn ToolExecutor>,
}

impl std::fmt::Debug for RegisteredTool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegisteredTool").field("spec", &self.spec).finish_non_exhaustive()
    }
}

type Tools = Arc<Vec<Arc<RegisteredTool>>>;

/// Copy-on-write tool table. Readers take a [`RegistrySnapshot`] that stays
/// valid while skills are swapped in behind it.
#[derive(Default)]
pub struct ToolRegistry {
    tools: RwLock<Tools>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, spec: ToolSpec, executor: Arc<dyn ToolExecutor>) -> Result<(), RegistryError> {
        if !is_valid_tool_name(&spec.name) {
            return Err(RegistryError::InvalidName(spec.name));
        }
        let mut guard = self.tools.write().unwrap();
        let mut next: Vec<Arc<RegisteredTool>> = guard.as_ref().clone();
        match next.iter().position(|t| t.spec.name == spec.name) {
            Some(i) if spec.origin == ToolOrigin::Skill && next[i].spec.origin == ToolOrigin::Skill => {
                next[i] = Arc::new(RegisteredTool { spec, executor });
            }
            Some(_) => return Err(RegistryError::DuplicateName(spec.name)),
            None => next.push(Arc::new(RegisteredTool { spec, executor })),
        }
        *guard = Arc::new(next);
        Ok(())
    }

    /// Replaces every skill-origin tool in one step. Entries that collide with a
    /// builtin are skipped and returned as errors.
    pub fn replace_skill_tools(&self, tools: Vec<(ToolSpec, Arc<dyn ToolExecutor>)>) -> Vec<RegistryError> {
        let mut guard = self.tools.write().unwrap();
        let mut next: Vec<Arc<RegisteredTool>> =
            guard.iter().filter(|t| t.spec.origin == ToolOrigin::Builtin).cloned().collect();
        let mut errors = Vec::new();
        for (mut spec, executor) in tools {
            spec.origin = ToolOrigin::Skill;
            if !is_valid_tool_name(&spec.name) {
                errors.push(RegistryError::InvalidName(spec.name));
                continue;
            }
            match next.iter().position(|t| t.spec.name == spec.name) {
                Some(i) if next[i].spec.origin == ToolOrigin::Skill => {
                    next[i] = Arc::new(RegisteredTool { spec, executor });
                }
                Some(_) => errors.push(RegistryError::DuplicateName(spec.name)),
                None => next.push(Arc::new(RegisteredTool { spec, executor })),
            }
        }
        *guard = Arc::new(next);
        errors
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        RegistrySnapshot { tools: self.tools.read().unwrap().clone() }
    }

    pub fn lookup(&self, name: &str) -> Option<Arc<RegisteredTool>> {
        self.snapshot().lookup(name)
    }

    pub fn len(&self) -> usize {
        self.tools.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable view of the registry taken at one instant.
#[derive(Clone, Debug)]
pub struct RegistrySnapshot {
    tools: Tools,
}

impl RegistrySnapshot {
    pub fn lookup(&self, name: &str) -> Option<Arc<RegisteredTool>> {
        self.tools.iter().find(|t| t.spec.name == name).cloned()
    }

    /// Specs in registration order.
    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Validates and runs one call. Every failure, including a panicking
    /// executor, comes back as an `ERROR: ...` observation.
    pub fn dispatch(&self, name: &str, args: &Value, ctx: &mut ToolContext<'_>) -> String {
        let Some(tool) = self.lookup(name) else {
            return format!("ERROR: unknown tool {name}");
        };
        let empty = serde_json::Map::new();
        let args = match args {
            Value::Object(m) => m,
            Value::Null => &empty,
            _ => return "ERROR: args must be a JSON object".to_string(),
        };
        if let Err(msg) = tool.spec.arg_schema.validate(args) {
            return format!("ERROR: {msg}");
        }
        match catch_unwind(AssertUnwindSafe(|| tool.executor.call(ctx, args))) {
            Ok(Ok(v)) => serde_json::to_string(&v).unwrap_or_else(|e| format!("ERROR: unserializable result: {e}")),
            Ok(Err(e)) => format!("ERROR: {e}"),
            Err(_) => format!("ERROR: tool {name} failed unexpectedly"),
        }
    }
}
