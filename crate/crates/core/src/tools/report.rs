use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetStore};
use super::ToolError;
use crate::persist::ArtifactStore;
use crate::types::{Artifact, Id};

/// Rows of a referenced table rendered into a report.
pub const REPORT_TABLE_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub heading: String,
    #[serde(default, alias = "body_text")]
    pub body: String,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Resolves an artifact by id, workspace-relative path, or bare file name (newest wins).
fn resolve_artifact(store: &ArtifactStore, session: &Id, reference: &str) -> Option<Artifact> {
    store.find(session, reference).or_else(|| {
        store
            .list(session)
            .into_iter()
            .rev()
            .find(|a| a.relative_path.rsplit('/').next() == Some(reference))
    })
}

fn table_html(out: &mut String, d: &Dataset) {
    out.push_str("<table>\n<thead><tr>");
    for c in &d.columns {
        let _ = write!(out, "<th>{}</th>", escape(&c.name));
    }
    out.push_str("</tr></thead>\n<tbody>\n");
    for row in d.rows.iter().take(REPORT_TABLE_ROWS) {
        out.push_str("<tr>");
        for cell in row {
            let _ = write!(out, "<td>{}</td>", escape(&cell.render()));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</tbody>\n</table>\n");
    if d.rows.len() > REPORT_TABLE_ROWS {
        let _ = writeln!(out, "<p class=\"note\">Showing {REPORT_TABLE_ROWS} of {} rows.</p>", d.rows.len());
    }
}

/// Renders a self-contained HTML document. Every reference is checked before rendering.
pub fn report_generate(
    title: &str,
    sections: &[ReportSection],
    datasets: &DatasetStore,
    artifacts: &ArtifactStore,
    session: &Id,
) -> Result<String, ToolError> {
    let mut missing = Vec::new();
    let mut resolved = Vec::with_capacity(sections.len());
    for s in sections {
        let mut arts = Vec::new();
        for r in &s.artifacts {
            match resolve_artifact(artifacts, session, r) {
                Some(a) => arts.push(a),
                None => missing.push(format!("artifact {r}")),
            }
        }
        let table = match &s.table {
            Some(h) => match datasets.get(h) {
                Ok(d) => Some(d),
                Err(_) => {
                    missing.push(format!("handle {h}"));
                    None
                }
            },
            None => None,
        };
        resolved.push((arts, table));
    }
    if !missing.is_empty() {
        return Err(ToolError::UnknownReference(missing.join(", ")));
    }

    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    out.push_str(
        "<style>\nbody{font-family:sans-serif;max-width:960px;margin:2em auto;color:#222}\n\
         table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 8px;text-align:left}\n\
         figure{margin:1em 0}pre{background:#f6f6f6;padding:1em;overflow-x:auto}\n</style>\n</head>\n<body>\n",
    );
    let _ = writeln!(out, "<h1>{}</h1>", escape(title));
    for (section, (arts, table)) in sections.iter().zip(resolved) {
        out.push_str("<section>\n");
        let _ = writeln!(out, "<h2>{}</h2>", escape(&section.heading));
        for para in section.body.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
            let _ = writeln!(out, "<p>{}</p>", escape(para).replace('\n', "<br>\n"));
        }
        for a in arts {
            let bytes = artifacts.read(&a)?;
            if a.media_type == "image/svg+xml" {
                out.push_str("<figure>\n");
                out.push_str(&String::from_utf8_lossy(&bytes));
                out.push_str("</figure>\n");
            } else if a.media_type.starts_with("text/") {
                let _ = writeln!(out, "<pre>{}</pre>", escape(&String::from_utf8_lossy(&bytes)));
            } else {
                let _ = writeln!(out, "<p class=\"attachment\">{} ({} bytes)</p>", escape(&a.relative_path), a.byte_length);
            }
        }
        if let Some(d) = table {
            table_html(&mut out, d);
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    Ok(out)
}
