use std::collections::HashSet;

use serde::Serialize;
use serde_json::{json, Value};

use super::dataset::{Cell, DType, Dataset};

/// Quantile of sorted values by linear interpolation at position `(n - 1) * p`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Lower and upper outlier fences `Q1 - 1.5 IQR`, `Q3 + 1.5 IQR`.
pub fn iqr_fences(values: &[f64]) -> Option<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&sorted, 0.25)?;
    let q3 = quantile_linear(&sorted, 0.75)?;
    let iqr = q3 - q1;
    Some((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

pub(crate) fn is_outlier(v: f64, fences: (f64, f64)) -> bool {
    v < fences.0 || v > fences.1
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    values.iter().fold(None, |acc, &v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Integer columns report integral min/max.
fn stat_value(v: Option<f64>, dtype: DType) -> Value {
    match (v, dtype) {
        (None, _) => Value::Null,
        (Some(x), DType::Integer) => Value::from(x as i64),
        (Some(x), _) => Cell::Float(x).to_json(),
    }
}

pub fn data_describe(d: &Dataset) -> Value {
    let columns: Vec<Value> = d
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.dtype.is_numeric() {
                let vals = d.numeric_values(i);
                let mm = min_max(&vals);
                json!({
                    "name": c.name,
                    "dtype": c.dtype.as_str(),
                    "min": stat_value(mm.map(|m| m.0), c.dtype),
                    "max": stat_value(mm.map(|m| m.1), c.dtype),
                    "mean": stat_value(mean(&vals), DType::Float),
                })
            } else {
                json!({"name": c.name, "dtype": c.dtype.as_str()})
            }
        })
        .collect();
    json!({
        "handle": d.handle,
        "source_path": d.source_path,
        "row_count": d.rows.len(),
        "columns": columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnProfile {
    pub name: String,
    pub dtype: DType,
    pub missing_count: usize,
    pub missing_fraction: f64,
    pub distinct_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub handle: String,
    pub row_count: usize,
    pub duplicate_row_count: usize,
    pub columns: Vec<ColumnProfile>,
}

pub fn data_profile(d: &Dataset) -> ProfileReport {
    let n = d.rows.len();
    let columns = d
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let missing_count = d.rows.iter().filter(|r| r[i].is_null()).count();
            let distinct_count =
                d.rows.iter().filter(|r| !r[i].is_null()).map(|r| r[i].key()).collect::<HashSet<_>>().len();
            let mut p = ColumnProfile {
                name: c.name.clone(),
                dtype: c.dtype,
                missing_count,
                missing_fraction: if n == 0 { 0.0 } else { missing_count as f64 / n as f64 },
                distinct_count,
                min: None,
                max: None,
                mean: None,
                stddev: None,
                outlier_count: None,
            };
            if c.dtype.is_numeric() {
                let vals = d.numeric_values(i);
                let mm = min_max(&vals);
                p.min = mm.map(|m| m.0);
                p.max = mm.map(|m| m.1);
                p.mean = mean(&vals);
                p.stddev = p.mean.map(|m| {
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt()
                });
                p.outlier_count = Some(match iqr_fences(&vals) {
                    Some(f) => vals.iter().filter(|v| is_outlier(**v, f)).count(),
                    None => 0,
                });
            }
            p
        })
        .collect();
    let distinct_rows =
        d.rows.iter().map(|r| r.iter().map(Cell::key).collect::<Vec<_>>()).collect::<HashSet<_>>().len();
    ProfileReport { handle: d.handle.clone(), row_count: n, duplicate_row_count: n - distinct_rows, columns }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::dataset::Column;

    fn int_table(name: &str, vals: &[Option<i64>]) -> Dataset {
        Dataset::new(
            vec![Column { name: name.into(), dtype: DType::Integer }],
            vals.iter().map(|v| vec![v.map_or(Cell::Null, Cell::Int)]).collect(),
            "t.csv",
        )
    }

    #[test]
    fn interpolated_quartiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(quantile_linear(&s, 0.25), Some(2.0));
        assert_eq!(quantile_linear(&s, 0.75), Some(4.0));
        assert_eq!(quantile_linear(&[1.0, 2.0], 0.5), Some(1.5));
        assert_eq!(quantile_linear(&[], 0.5), None);
        assert_eq!(iqr_fences(&s), Some((-1.0, 7.0)));
    }

    #[test]
    fn outlier_in_small_column() {
        let d = int_table("v", &[Some(1), Some(2), Some(3), Some(4), Some(100)]);
        let p = data_profile(&d);
        assert_eq!(p.columns[0].outlier_count, Some(1));
        assert_eq!(p.columns[0].missing_fraction, 0.0);
        // population stddev of 1,2,3,4,100
        let m: f64 = 110.0 / 5.0;
        let var = [1.0, 2.0, 3.0, 4.0, 100.0].iter().map(|v: &f64| (v - m).powi(2)).sum::<f64>() / 5.0;
        assert!((p.columns[0].stddev.unwrap() - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_and_missing() {
        let d = int_table("v", &[Some(1), Some(2), Some(1), None, Some(3)]);
        let p = data_profile(&d);
        assert_eq!(p.duplicate_row_count, 1);
        assert_eq!(p.columns[0].missing_count, 1);
        assert_eq!(p.columns[0].missing_fraction, 0.2);
        assert_eq!(p.columns[0].distinct_count, 3);
    }

    #[test]
    fn describe_symmetric_and_empty() {
        let d = int_table("v", &[Some(1), Some(2), Some(3)]);
        let v = data_describe(&d);
        assert_eq!(v["columns"][0]["min"], 1);
        assert_eq!(v["columns"][0]["max"], 3);
        assert_eq!(v["columns"][0]["mean"], 2.0);
        let e = int_table("v", &[]);
        let v = data_describe(&e);
        assert_eq!(v["row_count"], 0);
        assert!(v["columns"][0]["min"].is_null());
        assert!(v["columns"][0]["mean"].is_null());
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["handle", "source_path", "row_count", "columns"]);
    }
}
