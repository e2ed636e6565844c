use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::dataset::DatasetStore;
use super::ToolError;
use crate::persist::Workspace;

/// Text form of a JSON scalar: numbers in shortest round-trip form, null as empty.
pub fn render_scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) => i.to_string(),
            (_, Some(u), _) => u.to_string(),
            (_, _, Some(f)) => f.to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

enum Piece<'a> {
    Text(&'a str),
    Field(&'a str),
}

fn split_template(t: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = t;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        out.push(Piece::Text(&rest[..open]));
        out.push(Piece::Field(rest[open + 2..open + 2 + close].trim()));
        rest = &rest[open + 2 + close + 2..];
    }
    out.push(Piece::Text(rest));
    out
}

/// Replaces every `{{field}}` in `template`; lists all unresolved fields on failure.
pub fn fill_template(template: &str, values: &BTreeMap<String, String>) -> Result<String, ToolError> {
    let pieces = split_template(template);
    let mut missing: Vec<String> = Vec::new();
    let mut out = String::with_capacity(template.len());
    for p in &pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Field(f) => match values.get(*f) {
                Some(v) => out.push_str(v),
                None => {
                    if !missing.iter().any(|m| m == f) {
                        missing.push(f.to_string());
                    }
                }
            },
        }
    }
    if missing.is_empty() { Ok(out) } else { Err(ToolError::MissingField(missing)) }
}

/// `<stem>-filled.<ext>` for a template path.
pub fn filled_name(template_path: &str) -> String {
    let file = template_path.rsplit('/').next().unwrap_or(template_path);
    match file.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => format!("{stem}-filled.{ext}"),
        _ => format!("{file}-filled.txt"),
    }
}

pub fn media_type_for(name: &str) -> &'static str {
    match name.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).as_deref() {
        Some("md") => "text/markdown",
        Some("html" | "htm") => "text/html",
        Some("csv") => "text/csv",
        Some("json") => "application/json",
        _ => "text/plain",
    }
}

/// Fills the template at `template_path` from `values` and/or one dataset row.
/// Explicit values take precedence over row cells.
pub fn form_fill(
    workspace: &Workspace,
    datasets: &DatasetStore,
    template_path: &str,
    values: Option<&Map<String, Value>>,
    row: Option<(&str, usize)>,
) -> Result<String, ToolError> {
    let abs = workspace.resolve(template_path)?;
    if !abs.is_file() {
        return Err(ToolError::NotFound(template_path.to_string()));
    }
    let template = std::fs::read_to_string(&abs)
        .map_err(|e| ToolError::Failed(format!("cannot read template {template_path}: {e}")))?;
    let mut fields = BTreeMap::new();
    if let Some((handle, idx)) = row {
        let d = datasets.get(handle)?;
        let r = d
            .rows
            .get(idx)
            .ok_or_else(|| ToolError::InvalidArgs(format!("row {idx} out of range for {handle} ({} rows)", d.rows.len())))?;
        for (c, cell) in d.columns.iter().zip(r) {
            fields.insert(c.name.clone(), cell.render());
        }
    }
    for (k, v) in values.into_iter().flatten() {
        fields.insert(k.clone(), render_scalar(v));
    }
    fill_template(&template, &fields)
}
