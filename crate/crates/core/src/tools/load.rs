use std::collections::HashSet;

use super::dataset::{Cell, Column, DType, Dataset, DatasetStore};
use super::ToolError;
use crate::persist::Workspace;

/// Loads a CSV (or `.tsv`) file from the workspace into a fresh handle.
pub fn data_load(workspace: &Workspace, store: &mut DatasetStore, path: &str) -> Result<String, ToolError> {
    let abs = workspace.resolve(path)?;
    if !abs.is_file() {
        return Err(ToolError::NotFound(path.to_string()));
    }
    let bytes = std::fs::read(&abs).map_err(|e| ToolError::Failed(format!("cannot read {path}: {e}")))?;
    let delimiter = if path.to_ascii_lowercase().ends_with(".tsv") { b'\t' } else { b',' };
    let mut dataset = parse_delimited(&bytes, delimiter)?;
    dataset.source_path = workspace.relative(&abs).unwrap_or_else(|| path.to_string());
    store.insert(dataset)
}

/// Parses delimited text with a header row and infers column dtypes.
pub fn parse_delimited(bytes: &[u8], delimiter: u8) -> Result<Dataset, ToolError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ToolError::ParseError(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(ToolError::ParseError("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(ToolError::ParseError("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(ToolError::ParseError(format!("duplicate column name {h}")));
        }
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => ToolError::ParseError(format!(
                "row {} has {len} cells, expected {expected_len}",
                i + 1
            )),
            _ => ToolError::ParseError(e.to_string()),
        })?;
        raw.push(record.iter().map(str::to_string).collect());
    }

    let dtypes: Vec<DType> = (0..headers.len()).map(|c| infer(raw.iter().map(|r| r[c].as_str()))).collect();
    let rows = raw
        .into_iter()
        .map(|r| r.into_iter().zip(&dtypes).map(|(s, dt)| convert(&s, *dt)).collect())
        .collect();
    let columns = headers.into_iter().zip(dtypes).map(|(name, dtype)| Column { name, dtype }).collect();
    Ok(Dataset::new(columns, rows, ""))
}

fn parse_bool(s: &str) -> Option<bool> {
    if s.eq_ignore_ascii_case("true") {
        Some(true)
    } else if s.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

fn parse_float(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|f| f.is_finite())
}

fn infer<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> DType {
    let mut present = cells.filter(|s| !s.is_empty()).peekable();
    if present.peek().is_none() {
        return DType::String;
    }
    if present.clone().all(|s| s.parse::<i64>().is_ok()) {
        DType::Integer
    } else if present.clone().all(|s| parse_float(s).is_some()) {
        DType::Float
    } else if present.all(|s| parse_bool(s).is_some()) {
        DType::Boolean
    } else {
        DType::String
    }
}

fn convert(s: &str, dtype: DType) -> Cell {
    if s.is_empty() {
        return Cell::Null;
    }
    match dtype {
        DType::Integer => Cell::Int(s.parse().expect("inferred integer")),
        DType::Float => Cell::Float(parse_float(s).expect("inferred float")),
        DType::Boolean => Cell::Bool(parse_bool(s).expect("inferred boolean")),
        DType::String => Cell::Str(s.to_string()),
    }
}
