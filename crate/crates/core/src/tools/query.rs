use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::{Cell, CellKey, Column, DType, Dataset, DatasetStore};
use super::expr::Expr;
use super::{ToolError, OBSERVATION_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Count,
    Sum,
    Mean,
    Min,
    Max,
}

impl AggFn {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Mean => "mean",
            AggFn::Min => "min",
            AggFn::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggSpec {
    pub agg: AggFn,
    pub col: String,
    #[serde(rename = "as", default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
}

impl AggSpec {
    /// Output column name: the alias, or `<agg>_<col>`.
    pub fn output_name(&self) -> String {
        self.alias.clone().unwrap_or_else(|| format!("{}_{}", self.agg.as_str(), self.col))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectItem {
    Column(String),
    Aggregate(AggSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub col: String,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derive {
    #[serde(rename = "as")]
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderKey {
    pub col: String,
    #[serde(default)]
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default)]
    pub select: Vec<SelectItem>,
    #[serde(rename = "where", default)]
    pub filters: Vec<Predicate>,
    #[serde(default)]
    pub derive: Vec<Derive>,
    #[serde(default)]
    pub group_by: Vec<String>,
    #[serde(default)]
    pub order_by: Vec<OrderKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
}

fn bad(msg: impl Into<String>) -> ToolError {
    ToolError::BadQuery(msg.into())
}

impl QuerySpec {
    pub fn from_json(v: &Value) -> Result<QuerySpec, ToolError> {
        if v.get("join").is_some() {
            return Err(bad("joins are not supported"));
        }
        let q: QuerySpec = serde_json::from_value(v.clone()).map_err(|e| bad(e.to_string()))?;
        if q.limit == Some(0) {
            return Err(bad("limit must be a positive integer"));
        }
        Ok(q)
    }

    fn aggregates(&self) -> impl Iterator<Item = &AggSpec> {
        self.select.iter().filter_map(|s| match s {
            SelectItem::Aggregate(a) => Some(a),
            SelectItem::Column(_) => None,
        })
    }
}

struct CompiledPred {
    col: usize,
    op: CmpOp,
    value: Cell,
}

impl CompiledPred {
    fn new(d: &Dataset, p: &Predicate) -> Result<Self, ToolError> {
        let col = d.require_column(&p.col).map_err(bad)?;
        let dtype = d.columns[col].dtype;
        if p.op == CmpOp::Contains && dtype != DType::String {
            return Err(bad(format!("contains applies only to string columns, {} is {}", p.col, dtype.as_str())));
        }
        let value = match (dtype, &p.value) {
            (DType::Integer, Value::Number(n)) if n.as_i64().is_some() => Cell::Int(n.as_i64().unwrap()),
            (DType::Integer | DType::Float, Value::Number(n)) => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
            (DType::String, Value::String(s)) => Cell::Str(s.clone()),
            (DType::Boolean, Value::Bool(b)) => Cell::Bool(*b),
            _ => {
                return Err(bad(format!(
                    "value {} does not match {} column {}",
                    p.value,
                    dtype.as_str(),
                    p.col
                )))
            }
        };
        Ok(CompiledPred { col, op: p.op, value })
    }

    fn matches(&self, row: &[Cell]) -> bool {
        let cell = &row[self.col];
        if cell.is_null() {
            return false;
        }
        if self.op == CmpOp::Contains {
            return match (cell, &self.value) {
                (Cell::Str(s), Cell::Str(needle)) => s.contains(needle.as_str()),
                _ => false,
            };
        }
        let Some(ord) = cell.compare(&self.value) else { return false };
        match self.op {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Contains => unreachable!(),
        }
    }
}

fn aggregate_cells(agg: AggFn, dtype: DType, cells: &[&Cell], col: &str) -> Result<Cell, ToolError> {
    let present: Vec<&Cell> = cells.iter().copied().filter(|c| !c.is_null()).collect();
    if agg == AggFn::Count {
        return Ok(Cell::Int(present.len() as i64));
    }
    if present.is_empty() {
        return Ok(Cell::Null);
    }
    Ok(match agg {
        AggFn::Sum if dtype == DType::Integer => {
            let mut total: i64 = 0;
            for c in &present {
                if let Cell::Int(i) = c {
                    total = total.checked_add(*i).ok_or_else(|| bad(format!("integer overflow summing {col}")))?;
                }
            }
            Cell::Int(total)
        }
        AggFn::Sum => Cell::Float(present.iter().filter_map(|c| c.as_f64()).sum()),
        AggFn::Mean => {
            Cell::Float(present.iter().filter_map(|c| c.as_f64()).sum::<f64>() / present.len() as f64)
        }
        AggFn::Min | AggFn::Max => {
            let mut best = present[0];
            for c in &present[1..] {
                let ord = c.compare(best).unwrap_or(Ordering::Equal);
                if (agg == AggFn::Min && ord == Ordering::Less) || (agg == AggFn::Max && ord == Ordering::Greater) {
                    best = c;
                }
            }
            best.clone()
        }
        AggFn::Count => unreachable!(),
    })
}

fn group(d: &Dataset, q: &QuerySpec) -> Result<Dataset, ToolError> {
    let keys: Vec<usize> = q.group_by.iter().map(|g| d.require_column(g).map_err(bad)).collect::<Result<_, _>>()?;
    for item in &q.select {
        if let SelectItem::Column(name) = item {
            d.require_column(name).map_err(bad)?;
            if !q.group_by.contains(name) {
                return Err(bad(format!("column {name} must appear in group_by when aggregating")));
            }
        }
    }
    let mut columns: Vec<Column> = keys.iter().map(|&k| d.columns[k].clone()).collect();
    let mut aggs = Vec::new();
    for a in q.aggregates() {
        let idx = d.require_column(&a.col).map_err(bad)?;
        let dtype = d.columns[idx].dtype;
        if a.agg != AggFn::Count && !dtype.is_numeric() {
            return Err(bad(format!("cannot {} {} column {}", a.agg.as_str(), dtype.as_str(), a.col)));
        }
        let out = match a.agg {
            AggFn::Count => DType::Integer,
            AggFn::Mean => DType::Float,
            _ => dtype,
        };
        let name = a.output_name();
        if columns.iter().any(|c| c.name == name) {
            return Err(bad(format!("duplicate output column {name}")));
        }
        columns.push(Column { name, dtype: out });
        aggs.push((a, idx, dtype));
    }

    let mut order: Vec<Vec<CellKey>> = Vec::new();
    let mut members: HashMap<Vec<CellKey>, Vec<usize>> = HashMap::new();
    if keys.is_empty() {
        order.push(Vec::new());
        members.insert(Vec::new(), (0..d.rows.len()).collect());
    } else {
        for (i, row) in d.rows.iter().enumerate() {
            let k: Vec<CellKey> = keys.iter().map(|&c| row[c].key()).collect();
            members
                .entry(k.clone())
                .or_insert_with(|| {
                    order.push(k);
                    Vec::new()
                })
                .push(i);
        }
    }

    let mut rows = Vec::with_capacity(order.len());
    for k in &order {
        let idxs = &members[k];
        let mut row: Vec<Cell> = match idxs.first() {
            Some(&first) => keys.iter().map(|&c| d.rows[first][c].clone()).collect(),
            None => Vec::new(),
        };
        for (a, col, dtype) in &aggs {
            let cells: Vec<&Cell> = idxs.iter().map(|&i| &d.rows[i][*col]).collect();
            row.push(aggregate_cells(a.agg, *dtype, &cells, &a.col)?);
        }
        rows.push(row);
    }
    Ok(Dataset { handle: String::new(), columns, rows, source_path: d.source_path.clone() })
}

fn order_rows(d: &mut Dataset, keys: &[OrderKey]) -> Result<(), ToolError> {
    let idx: Vec<(usize, bool)> =
        keys.iter().map(|k| d.require_column(&k.col).map(|i| (i, k.descending)).map_err(bad)).collect::<Result<_, _>>()?;
    d.rows.sort_by(|a, b| {
        for &(c, desc) in &idx {
            let ord = match (&a[c], &b[c]) {
                (Cell::Null, Cell::Null) => Ordering::Equal,
                (Cell::Null, _) => Ordering::Greater,
                (_, Cell::Null) => Ordering::Less,
                (x, y) => {
                    let o = x.compare(y).unwrap_or(Ordering::Equal);
                    if desc { o.reverse() } else { o }
                }
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    });
    Ok(())
}

/// Evaluates `q` against `src` without touching it. Order: derive, where,
/// group/aggregate, order_by, limit, select.
pub fn execute(src: &Dataset, q: &QuerySpec) -> Result<Dataset, ToolError> {
    let mut cur = Dataset {
        handle: String::new(),
        columns: src.columns.clone(),
        rows: src.rows.clone(),
        source_path: src.source_path.clone(),
    };

    for d in &q.derive {
        if cur.column_index(&d.name).is_some() {
            return Err(bad(format!("derived column {} already exists", d.name)));
        }
        let e = Expr::parse(&d.expr, &cur).map_err(bad)?;
        for row in &mut cur.rows {
            let v = e.eval(row);
            row.push(v.map_or(Cell::Null, Cell::Float));
        }
        cur.columns.push(Column { name: d.name.clone(), dtype: DType::Float });
    }

    let preds: Vec<CompiledPred> = q.filters.iter().map(|p| CompiledPred::new(&cur, p)).collect::<Result<_, _>>()?;
    cur.rows.retain(|r| preds.iter().all(|p| p.matches(r)));

    let grouping = !q.group_by.is_empty() || q.aggregates().next().is_some();
    if grouping {
        cur = group(&cur, q)?;
    }

    order_rows(&mut cur, &q.order_by)?;

    if let Some(limit) = q.limit {
        cur.rows.truncate(usize::try_from(limit).unwrap_or(usize::MAX));
    }

    if !q.select.is_empty() {
        let mut picked: Vec<usize> = Vec::with_capacity(q.select.len());
        for item in &q.select {
            let name = match item {
                SelectItem::Column(c) => c.clone(),
                SelectItem::Aggregate(a) => a.output_name(),
            };
            let i = cur.require_column(&name).map_err(bad)?;
            if picked.contains(&i) {
                return Err(bad(format!("column {name} selected twice")));
            }
            picked.push(i);
        }
        cur.columns = picked.iter().map(|&i| cur.columns[i].clone()).collect();
        cur.rows = cur.rows.into_iter().map(|r| picked.iter().map(|&i| r[i].clone()).collect()).collect();
    }
    Ok(cur)
}

/// Runs a query, stores the result under a new handle, returns the observation.
pub fn data_query(store: &mut DatasetStore, handle: &str, query: &Value) -> Result<Value, ToolError> {
    let q = QuerySpec::from_json(query)?;
    let result = execute(store.get(handle)?, &q)?;
    let new_handle = store.insert(result)?;
    Ok(store.get(&new_handle)?.preview(OBSERVATION_ROWS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn table() -> Dataset {
        let cols = vec![
            Column { name: "vendor".into(), dtype: DType::String },
            Column { name: "fare".into(), dtype: DType::Float },
            Column { name: "tip".into(), dtype: DType::Float },
            Column { name: "n".into(), dtype: DType::Integer },
        ];
        let rows = vec![
            vec![Cell::Str("A".into()), Cell::Float(10.0), Cell::Float(1.0), Cell::Int(1)],
            vec![Cell::Str("B".into()), Cell::Float(0.01), Cell::Float(0.30), Cell::Int(2)],
            vec![Cell::Str("A".into()), Cell::Float(20.0), Cell::Null, Cell::Int(3)],
            vec![Cell::Str("B".into()), Cell::Float(5.0), Cell::Float(2.0), Cell::Null],
        ];
        Dataset::new(cols, rows, "t.csv")
    }

    fn run(q: Value) -> Result<Dataset, ToolError> {
        execute(&table(), &QuerySpec::from_json(&q)?)
    }

    #[test]
    fn derive_and_filter() {
        let r = run(json!({
            "derive": [{"as": "tip_pct", "expr": "tip ÷ fare × 100"}],
            "where": [{"col": "tip_pct", "op": "gt", "value": 2500}]
        }))
        .unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0][0], Cell::Str("B".into()));
        let pct = r.rows[0][4].as_f64().unwrap();
        assert!((pct - 3000.0).abs() < 1e-9);
    }

    #[test]
    fn empty_query_is_identity() {
        let r = run(json!({})).unwrap();
        assert_eq!(r.rows, table().rows);
        assert_eq!(r.columns, table().columns);
    }

    #[test]
    fn group_mean_skips_nulls_and_keeps_first_appearance_order() {
        let r = run(json!({
            "group_by": ["vendor"],
            "select": ["vendor", {"agg": "mean", "col": "tip", "as": "avg_tip"}, {"agg": "count", "col": "tip"}]
        }))
        .unwrap();
        assert_eq!(r.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["vendor", "avg_tip", "count_tip"]);
        assert_eq!(r.rows[0], vec![Cell::Str("A".into()), Cell::Float(1.0), Cell::Int(1)]);
        assert_eq!(r.rows[1], vec![Cell::Str("B".into()), Cell::Float(1.15), Cell::Int(2)]);
    }

    #[test]
    fn whole_table_aggregation() {
        let r = run(json!({"select": [{"agg": "sum", "col": "n"}, {"agg": "max", "col": "fare"}]})).unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Int(6), Cell::Float(20.0)]]);
        let r = run(json!({"where": [{"col": "n", "op": "gt", "value": 100}], "select": [{"agg": "count", "col": "n"}, {"agg": "mean", "col": "n"}]})).unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Int(0), Cell::Null]]);
    }

    #[test]
    fn order_is_stable_with_nulls_last() {
        let r = run(json!({"order_by": [{"col": "tip", "descending": true}], "select": ["n"]})).unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Null], vec![Cell::Int(1)], vec![Cell::Int(2)], vec![Cell::Int(3)]]);
        let r = run(json!({"order_by": [{"col": "vendor"}], "limit": 3, "select": ["n"]})).unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Int(1)], vec![Cell::Int(3)], vec![Cell::Int(2)]]);
    }

    #[test]
    fn schema_violations_name_the_column() {
        let cases = [
            json!({"where": [{"col": "nope", "op": "eq", "value": 1}]}),
            json!({"where": [{"col": "fare", "op": "contains", "value": "1"}]}),
            json!({"where": [{"col": "vendor", "op": "eq", "value": 1}]}),
            json!({"select": ["vendor", {"agg": "sum", "col": "fare"}]}),
            json!({"select": [{"agg": "sum", "col": "vendor"}]}),
            json!({"order_by": [{"col": "ghost"}]}),
            json!({"derive": [{"as": "fare", "expr": "1"}]}),
        ];
        for q in cases {
            match run(q.clone()) {
                Err(ToolError::BadQuery(m)) => assert!(!m.is_empty(), "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
        match run(json!({"where": [{"col": "nope", "op": "eq", "value": 1}]})) {
            Err(ToolError::BadQuery(m)) => assert!(m.contains("nope")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn joins_and_unknown_fields_are_rejected() {
        assert!(matches!(QuerySpec::from_json(&json!({"join": {}})), Err(ToolError::BadQuery(m)) if m.contains("join")));
        assert!(matches!(QuerySpec::from_json(&json!({"having": []})), Err(ToolError::BadQuery(_))));
        assert!(matches!(QuerySpec::from_json(&json!({"limit": 0})), Err(ToolError::BadQuery(_))));
    }

    #[test]
    fn query_registers_new_handle_and_leaves_source() {
        let mut store = DatasetStore::new();
        store.insert(table()).unwrap();
        let before = store.get("d1").unwrap().clone();
        let obs = data_query(&mut store, "d1", &json!({"where": [{"col": "n", "op": "ge", "value": 2}]})).unwrap();
        assert_eq!(obs["handle"], "d2");
        assert_eq!(obs["row_count"], 2);
        assert_eq!(store.get("d1").unwrap(), &before);
    }
}
