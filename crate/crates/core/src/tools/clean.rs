use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::{Cell, DType, Dataset, DatasetStore};
use super::stats::{iqr_fences, is_outlier};
use super::{ToolError, OBSERVATION_ROWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillStrategy {
    Mean,
    Constant(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum CleanOp {
    DropDuplicates,
    FillMissing { col: String, strategy: FillStrategy },
    DropOutliers { col: String },
}

fn bad(msg: impl Into<String>) -> ToolError {
    ToolError::BadOp(msg.into())
}

fn constant_cell(dtype: DType, v: &Value, col: &str) -> Result<Cell, ToolError> {
    let cell = match (dtype, v) {
        (DType::Integer, Value::Number(n)) if n.is_i64() => Cell::Int(n.as_i64().unwrap()),
        (DType::Float, Value::Number(n)) => Cell::Float(n.as_f64().unwrap_or(0.0)),
        (DType::String, Value::String(s)) => Cell::Str(s.clone()),
        (DType::Boolean, Value::Bool(b)) => Cell::Bool(*b),
        _ => return Err(bad(format!("constant {v} does not fit {} column {col}", dtype.as_str()))),
    };
    Ok(cell)
}

fn apply(d: &mut Dataset, op: &CleanOp) -> Result<(), ToolError> {
    match op {
        CleanOp::DropDuplicates => {
            let mut seen = HashSet::new();
            d.rows.retain(|r| seen.insert(r.iter().map(Cell::key).collect::<Vec<_>>()));
        }
        CleanOp::FillMissing { col, strategy } => {
            let idx = d.require_column(col).map_err(bad)?;
            let dtype = d.columns[idx].dtype;
            let fill = match strategy {
                FillStrategy::Constant(v) => constant_cell(dtype, v, col)?,
                FillStrategy::Mean => {
                    if !dtype.is_numeric() {
                        return Err(bad(format!("mean fill needs a numeric column, {col} is {}", dtype.as_str())));
                    }
                    let vals = d.numeric_values(idx);
                    if vals.is_empty() {
                        return Err(bad(format!("column {col} has no values to average")));
                    }
                    let m = vals.iter().sum::<f64>() / vals.len() as f64;
                    if dtype == DType::Integer && m.fract() == 0.0 && m.abs() < i64::MAX as f64 {
                        Cell::Int(m as i64)
                    } else {
                        if dtype == DType::Integer {
                            d.columns[idx].dtype = DType::Float;
                            for r in &mut d.rows {
                                if let Cell::Int(i) = r[idx] {
                                    r[idx] = Cell::Float(i as f64);
                                }
                            }
                        }
                        Cell::Float(m)
                    }
                }
            };
            for r in &mut d.rows {
                if r[idx].is_null() {
                    r[idx] = fill.clone();
                }
            }
        }
        CleanOp::DropOutliers { col } => {
            let idx = d.require_column(col).map_err(bad)?;
            if !d.columns[idx].dtype.is_numeric() {
                return Err(bad(format!("drop_outliers needs a numeric column, {col} is {}", d.columns[idx].dtype.as_str())));
            }
            if let Some(f) = iqr_fences(&d.numeric_values(idx)) {
                d.rows.retain(|r| r[idx].as_f64().is_none_or(|v| !is_outlier(v, f)));
            }
        }
    }
    Ok(())
}

/// Applies `ops` in order to a copy of `handle`, registered under a new handle.
pub fn data_clean(store: &mut DatasetStore, handle: &str, ops: &Value) -> Result<Value, ToolError> {
    let ops: Vec<CleanOp> = serde_json::from_value(ops.clone()).map_err(|e| bad(e.to_string()))?;
    let mut copy = store.get(handle)?.clone();
    for op in &ops {
        apply(&mut copy, op)?;
    }
    let new_handle = store.insert(copy)?;
    Ok(store.get(&new_handle)?.preview(OBSERVATION_ROWS))
}
