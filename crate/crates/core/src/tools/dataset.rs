use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ToolError;

pub const MAX_HANDLES: usize = 100;
pub const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    Integer,
    Float,
    String,
    Boolean,
}

impl DType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DType::Integer | DType::Float)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::Integer => "integer",
            DType::Float => "float",
            DType::String => "string",
            DType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

/// Hashable identity of a cell; floats compare by bit pattern with -0.0 folded into 0.0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKey {
    Null,
    Int(i64),
    Float(u64),
    Str(String),
    Bool(bool),
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Int(i) => Value::from(*i),
            Cell::Float(f) => serde_json::Number::from_f64(*f).map_or(Value::Null, Value::Number),
            Cell::Str(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }

    pub fn key(&self) -> CellKey {
        match self {
            Cell::Null => CellKey::Null,
            Cell::Int(i) => CellKey::Int(*i),
            Cell::Float(f) => CellKey::Float(if *f == 0.0 { 0.0f64.to_bits() } else { f.to_bits() }),
            Cell::Str(s) => CellKey::Str(s.clone()),
            Cell::Bool(b) => CellKey::Bool(*b),
        }
    }

    /// Ordering between non-null cells of one column. `None` for nulls or mixed kinds.
    pub fn compare(&self, other: &Cell) -> Option<Ordering> {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => Some(a.cmp(b)),
            (Cell::Str(a), Cell::Str(b)) => Some(a.cmp(b)),
            (Cell::Bool(a), Cell::Bool(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    /// Plain-text rendering: shortest round-trip form for numbers, empty for null.
    pub fn render(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => f.to_string(),
            Cell::Str(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub dtype: DType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub handle: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub source_path: String,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Cell>>, source_path: impl Into<String>) -> Self {
        Dataset { handle: String::new(), columns, rows, source_path: source_path.into() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize, String> {
        self.column_index(name).ok_or_else(|| format!("unknown column {name}"))
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.columns.len()
    }

    pub fn numeric_values(&self, col: usize) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r[col].as_f64()).collect()
    }

    /// Schema, row count and the first `limit` rows as JSON arrays.
    pub fn preview(&self, limit: usize) -> Value {
        let columns: Vec<Value> = self
            .columns
            .iter()
            .map(|c| serde_json::json!({"name": c.name, "dtype": c.dtype.as_str()}))
            .collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .take(limit)
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        serde_json::json!({
            "handle": self.handle,
            "row_count": self.rows.len(),
            "columns": columns,
            "rows": rows,
        })
    }

    /// Checks the row-width and dtype invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(format!("row {i} has {} cells, expected {}", row.len(), self.columns.len()));
            }
            for (cell, col) in row.iter().zip(&self.columns) {
                let ok = matches!(
                    (cell, col.dtype),
                    (Cell::Null, _)
                        | (Cell::Int(_), DType::Integer)
                        | (Cell::Float(_), DType::Float)
                        | (Cell::Str(_), DType::String)
                        | (Cell::Bool(_), DType::Boolean)
                );
                if !ok {
                    return Err(format!("row {i} column {} holds {cell:?}", col.name));
                }
            }
        }
        Ok(())
    }
}

/// Per-session datasets, addressed as `d1`, `d2`, ...
#[derive(Debug, Default)]
pub struct DatasetStore {
    next: u32,
    sets: BTreeMap<u32, Dataset>,
}

impl DatasetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mut dataset: Dataset) -> Result<String, ToolError> {
        if self.sets.len() >= MAX_HANDLES {
            return Err(ToolError::StoreFull(format!("at most {MAX_HANDLES} datasets per session")));
        }
        let cells: usize = self.sets.values().map(Dataset::cell_count).sum();
        if cells + dataset.cell_count() > MAX_CELLS {
            return Err(ToolError::StoreFull(format!("at most {MAX_CELLS} cells per session")));
        }
        self.next += 1;
        let handle = format!("d{}", self.next);
        dataset.handle = handle.clone();
        self.sets.insert(self.next, dataset);
        Ok(handle)
    }

    pub fn get(&self, handle: &str) -> Result<&Dataset, ToolError> {
        handle
            .strip_prefix('d')
            .and_then(|n| n.parse::<u32>().ok())
            .and_then(|n| self.sets.get(&n))
            .ok_or_else(|| ToolError::UnknownHandle(handle.to_string()))
    }

    pub fn handles(&self) -> Vec<String> {
        self.sets.values().map(|d| d.handle.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
