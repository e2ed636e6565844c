use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::chart::{chart_render, ChartSpec};
use super::clean::data_clean;
use super::form::{filled_name, form_fill, media_type_for};
use super::load::data_load;
use super::query::data_query;
use super::report::{report_generate, ReportSection};
use super::stats::{data_describe, data_profile};
use super::{slug, ArgSchema, ArgType, ToolContext, ToolError, ToolExecutor, ToolOrigin, ToolRegistry, ToolSpec};
use crate::memory::{memory_search, GlobalMemoryEntry, MemoryKind};
use crate::types::Artifact;

const DEFAULT_TOP_K: usize = 5;

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> &'a str {
    args.get(name).and_then(Value::as_str).unwrap_or_default()
}

fn artifact_json(a: &Artifact) -> Value {
    json!({
        "id": a.id,
        "path": a.relative_path,
        "media_type": a.media_type,
        "byte_length": a.byte_length,
    })
}

fn save(ctx: &mut ToolContext<'_>, name: &str, bytes: &[u8], media_type: &str) -> Result<Artifact, ToolError> {
    let a = ctx.artifacts.save(ctx.session_id, name, bytes, media_type)?;
    ctx.produced.push(a.clone());
    Ok(a)
}

fn load(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let handle = data_load(ctx.workspace, ctx.datasets, str_arg(args, "path"))?;
    let d = ctx.datasets.get(&handle)?;
    let columns: Vec<Value> = d.columns.iter().map(|c| json!({"name": c.name, "dtype": c.dtype.as_str()})).collect();
    Ok(json!({"handle": handle, "source_path": d.source_path, "row_count": d.rows.len(), "columns": columns}))
}

fn describe(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    Ok(data_describe(ctx.datasets.get(str_arg(args, "handle"))?))
}

fn profile(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let report = data_profile(ctx.datasets.get(str_arg(args, "handle"))?);
    serde_json::to_value(report).map_err(|e| ToolError::Failed(e.to_string()))
}

fn query(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    data_query(ctx.datasets, str_arg(args, "handle"), &args["query"])
}

fn clean(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    data_clean(ctx.datasets, str_arg(args, "handle"), &args["ops"])
}

fn chart(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let spec = ChartSpec::from_json(&args["spec"])?;
    let svg = chart_render(ctx.datasets.get(str_arg(args, "handle"))?, &spec)?;
    let name = format!("{}.svg", slug(&spec.title, "chart"));
    let a = save(ctx, &name, svg.as_bytes(), "image/svg+xml")?;
    Ok(json!({"artifact": artifact_json(&a)}))
}

fn report(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let title = str_arg(args, "title");
    let sections: Vec<ReportSection> = match args.get("sections") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| ToolError::InvalidArgs(format!("sections: {e}")))?,
    };
    let html = report_generate(title, &sections, ctx.datasets, ctx.artifacts, ctx.session_id)?;
    let name = format!("{}.html", slug(title, "report"));
    let a = save(ctx, &name, html.as_bytes(), "text/html")?;
    Ok(json!({"artifact": artifact_json(&a)}))
}

fn form(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let template = str_arg(args, "template_path");
    let row = match (args.get("handle").and_then(Value::as_str), args.get("row_index")) {
        (Some(h), Some(i)) => {
            let idx = i.as_u64().ok_or_else(|| ToolError::InvalidArgs("row_index must be a non-negative integer".into()))?;
            Some((h, idx as usize))
        }
        (Some(h), None) => Some((h, 0)),
        (None, Some(_)) => return Err(ToolError::InvalidArgs("row_index needs handle".into())),
        (None, None) => None,
    };
    let values = args.get("values").and_then(Value::as_object);
    if values.is_none() && row.is_none() {
        return Err(ToolError::InvalidArgs("provide values or handle".into()));
    }
    let filled = form_fill(ctx.workspace, ctx.datasets, template, values, row)?;
    let name = filled_name(template);
    let a = save(ctx, &name, filled.as_bytes(), media_type_for(&name))?;
    Ok(json!({"artifact": artifact_json(&a)}))
}

fn search(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let top_k = match args.get("top_k").and_then(Value::as_f64) {
        Some(k) if k >= 1.0 => k as usize,
        Some(_) => return Err(ToolError::InvalidArgs("top_k must be at least 1".into())),
        None => DEFAULT_TOP_K,
    };
    let hits = memory_search(ctx.memory, str_arg(args, "query"), top_k)?;
    Ok(json!({"hits": hits}))
}

fn record(ctx: &mut ToolContext<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let kind = match args.get("kind").and_then(Value::as_str).unwrap_or("note") {
        "finding" => MemoryKind::Finding,
        "artifact" => MemoryKind::Artifact,
        "note" => MemoryKind::Note,
        other => return Err(ToolError::InvalidArgs(format!("unknown memory kind {other}"))),
    };
    let text = str_arg(args, "text").trim();
    if text.is_empty() {
        return Err(ToolError::InvalidArgs("text must not be empty".into()));
    }
    let entry = GlobalMemoryEntry {
        session_id: ctx.session_id.clone(),
        recorded_at: ctx.clock.now(),
        kind,
        text: text.to_string(),
    };
    ctx.memory.record_global(&entry)?;
    Ok(json!({"recorded": entry.bullet()?.trim_end()}))
}

type Exec = fn(&mut ToolContext<'_>, &Map<String, Value>) -> Result<Value, ToolError>;

fn builtins() -> Vec<(&'static str, &'static str, ArgSchema, Exec)> {
    use ArgType::*;
    vec![
        (
            "data_load",
            "Load a CSV or TSV file from the workspace; returns a dataset handle and schema.",
            ArgSchema::new().required("path", String),
            load,
        ),
        (
            "data_describe",
            "Schema, row count and min/max/mean of numeric columns.",
            ArgSchema::new().required("handle", String),
            describe,
        ),
        (
            "data_profile",
            "Data quality profile: missing values, distinct counts, duplicates, stddev, IQR outliers.",
            ArgSchema::new().required("handle", String),
            profile,
        ),
        (
            "data_query",
            "Query a dataset with {select, where, derive, group_by, order_by, limit}; result gets a new handle.",
            ArgSchema::new().required("handle", String).required("query", Object),
            query,
        ),
        (
            "data_clean",
            "Apply cleaning ops in order (drop_duplicates, fill_missing, drop_outliers) to a copy; returns a new handle.",
            ArgSchema::new().required("handle", String).required("ops", Array),
            clean,
        ),
        (
            "chart_render",
            "Render a bar, line, scatter or histogram chart as SVG: spec {kind, x, y, title, bins}.",
            ArgSchema::new().required("handle", String).required("spec", Object),
            chart,
        ),
        (
            "report_generate",
            "Write an HTML report: title plus sections [{heading, body, artifacts, table}].",
            ArgSchema::new().required("title", String).optional("sections", Array),
            report,
        ),
        (
            "form_fill",
            "Fill {{field}} placeholders of a template from values or a dataset row.",
            ArgSchema::new()
                .required("template_path", String)
                .optional("values", Object)
                .optional("handle", String)
                .optional("row_index", Number),
            form,
        ),
        (
            "memory_search",
            "Search long-term memory (MEMORY.md, SOULS.md) for past findings.",
            ArgSchema::new().required("query", String).optional("top_k", Number),
            search,
        ),
        (
            "memory_record",
            "Record a one-line finding, artifact or note in long-term memory.",
            ArgSchema::new().required("text", String).optional("kind", String),
            record,
        ),
    ]
}

pub fn register_builtins(registry: &ToolRegistry) -> Result<(), super::RegistryError> {
    for (name, description, arg_schema, exec) in builtins() {
        let spec = ToolSpec { name: name.into(), description: description.into(), arg_schema, origin: ToolOrigin::Builtin };
        registry.register(spec, Arc::new(exec) as Arc<dyn ToolExecutor>)?;
    }
    Ok(())
}

pub fn builtin_registry() -> ToolRegistry {
    let r = ToolRegistry::new();
    register_builtins(&r).expect("builtin names are unique");
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryFiles;
    use crate::persist::{init_workspace, ArtifactStore};
    use crate::tools::DatasetStore;
    use crate::types::{Id, SequentialIds, StepClock};

    #[test]
    fn dispatch_round_trip_through_builtins() {
        let dir = tempfile::tempdir().unwrap();
        let ws = init_workspace(dir.path()).unwrap().workspace;
        std::fs::write(ws.data_dir().join("t.csv"), "cat,v\na,1\nb,2\na,3\n").unwrap();
        std::fs::write(ws.data_dir().join("form.md"), "Category {{cat}} has {{ v }}\n").unwrap();
        let clock = Arc::new(StepClock::fixed());
        let artifacts = ArtifactStore::new(ws.clone(), clock.clone(), Arc::new(SequentialIds::starting_at(100)));
        let memory = MemoryFiles::new(ws.root());
        let mut datasets = DatasetStore::new();
        let sid = Id::from_u128(1);
        let mut ctx = ToolContext {
            session_id: &sid,
            workspace: &ws,
            datasets: &mut datasets,
            artifacts: &artifacts,
            memory: &memory,
            clock: clock.as_ref(),
            produced: Vec::new(),
        };
        let reg = builtin_registry();
        let snap = reg.snapshot();
        assert_eq!(snap.len(), 10);

        let obs = snap.dispatch("data_load", &json!({"path": "data/t.csv"}), &mut ctx);
        assert!(obs.starts_with("{\"handle\":\"d1\""), "{obs}");
        let obs = snap.dispatch("data_describe", &json!({"handle": "d1"}), &mut ctx);
        let v: Value = serde_json::from_str(&obs).unwrap();
        assert_eq!(v["columns"][1]["mean"], 2.0);
        let obs = snap.dispatch("chart_render", &json!({"handle": "d1", "spec": {"kind": "bar", "x": "cat", "y": {"agg": "sum", "col": "v"}, "title": "Sums"}}), &mut ctx);
        assert!(obs.contains("sums.svg"), "{obs}");
        let obs = snap.dispatch("report_generate", &json!({"title": "Report", "sections": [{"heading": "h", "body": "b", "artifacts": ["sums.svg"]}]}), &mut ctx);
        assert!(obs.contains("report.html"), "{obs}");
        let obs = snap.dispatch("form_fill", &json!({"template_path": "data/form.md", "handle": "d1", "row_index": 1}), &mut ctx);
        assert!(obs.contains("form-filled.md"), "{obs}");
        assert_eq!(ctx.produced.len(), 3);
        let filled = artifacts.read(&ctx.produced[2]).unwrap();
        assert_eq!(String::from_utf8(filled).unwrap(), "Category b has 2\n");

        let obs = snap.dispatch("memory_record", &json!({"kind": "finding", "text": "vendor 2 tips more"}), &mut ctx);
        assert!(obs.contains("- finding: vendor 2 tips more"), "{obs}");
        let obs = snap.dispatch("memory_search", &json!({"query": "vendor tips"}), &mut ctx);
        assert!(obs.contains("vendor 2 tips more"), "{obs}");

        assert_eq!(snap.dispatch("no_such_tool", &json!({}), &mut ctx), "ERROR: unknown tool no_such_tool");
        assert_eq!(snap.dispatch("data_query", &json!({"handle": "d1"}), &mut ctx), "ERROR: missing required arg query");
        assert_eq!(snap.dispatch("data_describe", &json!({"handle": "d7"}), &mut ctx), "ERROR: unknown handle d7");
        assert_eq!(snap.dispatch("data_describe", &json!([1]), &mut ctx), "ERROR: args must be a JSON object");
    }
}
