//! Tool registry and the built-in tabular data toolchain.
//!
//! Every tool takes a JSON object of arguments, validated against its
//! [`ArgSchema`], and returns a JSON value rendered compactly as the observation
//! string the engine feeds back to the model.

mod builtin;
mod chart;
mod clean;
mod dataset;
mod expr;
mod form;
mod load;
mod query;
mod registry;
mod report;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::memory::{MemoryError, MemoryFiles};
use crate::persist::{ArtifactStore, PersistError, Workspace};
use crate::sandbox::PathEscape;
use crate::types::{Artifact, Clock, Id};

pub use builtin::{builtin_registry, register_builtins};
pub use chart::{chart_render, nice_ticks, ChartKind, ChartSpec, YSpec};
pub use clean::{data_clean, CleanOp, FillStrategy};
pub use dataset::{Cell, Column, DType, Dataset, DatasetStore, MAX_CELLS, MAX_HANDLES};
pub use expr::Expr;
pub use form::{fill_template, filled_name, form_fill, media_type_for, render_scalar};
pub use load::{data_load, parse_delimited};
pub use query::{data_query, execute, AggFn, AggSpec, CmpOp, Derive, OrderKey, Predicate, QuerySpec, SelectItem};
pub use registry::{RegisteredTool, RegistryError, RegistrySnapshot, ToolRegistry};
pub use report::{report_generate, ReportSection};
pub use stats::{data_describe, data_profile, iqr_fences, quantile_linear, ColumnProfile, ProfileReport};

/// Rows shown in a query observation.
pub const OBSERVATION_ROWS: usize = 20;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown handle {0}")]
    UnknownHandle(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("file not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    PathEscape(#[from] PathEscape),
    #[error("bad query: {0}")]
    BadQuery(String),
    #[error("bad op: {0}")]
    BadOp(String),
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("unknown reference: {0}")]
    UnknownReference(String),
    #[error("missing field: {}", .0.join(", "))]
    MissingField(Vec<String>),
    #[error("dataset store full: {0}")]
    StoreFull(String),
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    String,
    Number,
    Boolean,
    Object,
    Array,
}

impl ArgType {
    fn matches(self, v: &Value) -> bool {
        match self {
            ArgType::String => v.is_string(),
            ArgType::Number => v.is_number(),
            ArgType::Boolean => v.is_boolean(),
            ArgType::Object => v.is_object(),
            ArgType::Array => v.is_array(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ArgType::String => "string",
            ArgType::Number => "number",
            ArgType::Boolean => "boolean",
            ArgType::Object => "object",
            ArgType::Array => "array",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgField {
    #[serde(rename = "type")]
    pub ty: ArgType,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArgSchema {
    pub fields: BTreeMap<String, ArgField>,
    /// Skill executables receive whatever object the model sends.
    #[serde(default)]
    pub allow_additional: bool,
}

impl ArgSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn required(mut self, name: &str, ty: ArgType) -> Self {
        self.fields.insert(name.to_string(), ArgField { ty, required: true });
        self
    }

    pub fn optional(mut self, name: &str, ty: ArgType) -> Self {
        self.fields.insert(name.to_string(), ArgField { ty, required: false });
        self
    }

    pub fn open() -> Self {
        ArgSchema { fields: BTreeMap::new(), allow_additional: true }
    }

    /// Returns the message that follows `ERROR: ` on failure.
    pub fn validate(&self, args: &Map<String, Value>) -> Result<(), String> {
        for (name, field) in &self.fields {
            match args.get(name) {
                None | Some(Value::Null) if field.required => {
                    return Err(format!("missing required arg {name}"))
                }
                Some(v) if !v.is_null() && !field.ty.matches(v) => {
                    return Err(format!("arg {name} must be of type {}", field.ty.as_str()))
                }
                _ => {}
            }
        }
        if !self.allow_additional {
            if let Some(extra) = args.keys().find(|k| !self.fields.contains_key(*k)) {
                return Err(format!("unexpected arg {extra}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolOrigin {
    Builtin,
    Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub arg_schema: ArgSchema,
    pub origin: ToolOrigin,
}

/// Per-call view of the session a tool acts on.
pub struct ToolContext<'a> {
    pub session_id: &'a Id,
    pub workspace: &'a Workspace,
    pub datasets: &'a mut DatasetStore,
    pub artifacts: &'a ArtifactStore,
    pub memory: &'a MemoryFiles,
    pub clock: &'a dyn Clock,
    /// Artifacts written during the current turn, in creation order.
    pub produced: Vec<Artifact>,
}

pub trait ToolExecutor: Send + Sync {
    fn call(&self, ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError>;
}

impl<F> ToolExecutor for F
where
    F: Fn(&mut ToolContext<'_>, &Map<String, Value>) -> Result<Value, ToolError> + Send + Sync,
{
    fn call(&self, ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
        self(ctx, args)
    }
}

/// Lowercase snake_case: `[a-z][a-z0-9_]*`.
pub fn is_valid_tool_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// File-name-safe slug of `text`, or `fallback` when nothing usable remains.
pub(crate) fn slug(text: &str, fallback: &str) -> String {
    let mut out = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
        if out.len() >= 60 {
            break;
        }
    }
    let out = out.trim_end_matches('-').to_string();
    if out.is_empty() { fallback.to_string() } else { out }
}
