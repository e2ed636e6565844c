//! Naive reference implementations used as test oracles.
//!
//! Tables and queries are generated in a private representation, evaluated row
//! by row here, and compared with what the real query engine returns.

#![allow(dead_code)]

use std::cmp::Ordering;

use dataclaw_core::tools::{data_profile, execute, Cell, Column, DType, Dataset, QuerySpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum V {
    Null,
    I(i64),
    F(f64),
    S(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Float,
    Str,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub names: Vec<String>,
    pub kinds: Vec<Kind>,
    pub rows: Vec<Vec<V>>,
}

#[derive(Debug, Clone)]
pub enum E {
    Num(f64),
    Col(String),
    Neg(Box<E>),
    Bin(char, Box<E>, Box<E>),
}

#[derive(Debug, Clone)]
pub struct Q {
    pub derive: Option<(String, E)>,
    pub preds: Vec<(String, &'static str, V)>,
    pub group_by: Vec<String>,
    pub aggs: Vec<(&'static str, String)>,
    pub cols: Vec<String>,
    pub order: Vec<(String, bool)>,
    pub limit: Option<usize>,
}

const WORDS: [&str; 5] = ["a", "b", "ab", "ba", "c"];

fn gen_value(rng: &mut StdRng, kind: Kind) -> V {
    if rng.random_bool(0.1) {
        return V::Null;
    }
    match kind {
        Kind::Int => V::I(rng.random_range(-50..50)),
        Kind::Float => V::F(rng.random_range(-2000..2000) as f64 / 8.0 + if rng.random_bool(0.3) { 0.1 } else { 0.0 }),
        Kind::Str => V::S(WORDS[rng.random_range(0..WORDS.len())].to_string()),
    }
}

pub fn gen_table(rng: &mut StdRng) -> Table {
    let ncols = rng.random_range(1..=6);
    let kinds: Vec<Kind> = (0..ncols).map(|_| [Kind::Int, Kind::Float, Kind::Str][rng.random_range(0..3)]).collect();
    let nrows = rng.random_range(0..=200);
    let rows = (0..nrows).map(|_| kinds.iter().map(|&k| gen_value(rng, k)).collect()).collect();
    Table { names: (0..ncols).map(|i| format!("c{i}")).collect(), kinds, rows }
}

fn gen_expr(rng: &mut StdRng, numeric: &[String], depth: u32) -> E {
    if depth == 0 || rng.random_bool(0.35) {
        return if numeric.is_empty() || rng.random_bool(0.3) {
            E::Num([0.0, 0.5, 2.0, 3.0, 100.0][rng.random_range(0..5)])
        } else {
            E::Col(numeric[rng.random_range(0..numeric.len())].clone())
        };
    }
    if rng.random_bool(0.1) {
        return E::Neg(Box::new(gen_expr(rng, numeric, depth - 1)));
    }
    let op = ['+', '-', '*', '/'][rng.random_range(0..4)];
    E::Bin(op, Box::new(gen_expr(rng, numeric, depth - 1)), Box::new(gen_expr(rng, numeric, depth - 1)))
}

impl E {
    pub fn render(&self) -> String {
        match self {
            E::Num(n) => format!("{n}"),
            E::Col(c) => c.clone(),
            E::Neg(e) => format!("-({})", e.render()),
            E::Bin(op, a, b) => format!("({} {op} {})", a.render(), b.render()),
        }
    }

    fn eval(&self, names: &[String], row: &[V]) -> Option<f64> {
        let v = match self {
            E::Num(n) => *n,
            E::Col(c) => match &row[names.iter().position(|n| n == c)?] {
                V::I(i) => *i as f64,
                V::F(f) => *f,
                _ => return None,
            },
            E::Neg(e) => -e.eval(names, row)?,
            E::Bin(op, a, b) => {
                let (x, y) = (a.eval(names, row)?, b.eval(names, row)?);
                match op {
                    '+' => x + y,
                    '-' => x - y,
                    '*' => x * y,
                    _ if y == 0.0 => return None,
                    _ => x / y,
                }
            }
        };
        v.is_finite().then_some(v)
    }
}

pub fn gen_query(rng: &mut StdRng, t: &Table) -> Q {
    let mut names = t.names.clone();
    let mut kinds = t.kinds.clone();
    let numeric: Vec<String> =
        names.iter().zip(&kinds).filter(|(_, k)| **k != Kind::Str).map(|(n, _)| n.clone()).collect();

    let derive = rng.random_bool(0.4).then(|| ("dv".to_string(), gen_expr(rng, &numeric, 3)));
    if derive.is_some() {
        names.push("dv".into());
        kinds.push(Kind::Float);
    }

    let mut preds = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let i = rng.random_range(0..names.len());
        let (op, value) = match kinds[i] {
            Kind::Str if rng.random_bool(0.4) => ("contains", V::S("a".into())),
            Kind::Str => (["eq", "ne", "lt", "ge"][rng.random_range(0..4)], V::S(WORDS[rng.random_range(0..5)].into())),
            Kind::Int => (["eq", "ne", "lt", "le", "gt", "ge"][rng.random_range(0..6)], V::I(rng.random_range(-50..50))),
            Kind::Float => (["lt", "le", "gt", "ge", "ne"][rng.random_range(0..5)], V::F(rng.random_range(-250..250) as f64)),
        };
        preds.push((names[i].clone(), op, value));
    }

    let mut group_by = Vec::new();
    let mut aggs = Vec::new();
    let mut cols = Vec::new();
    let out_names: Vec<String> = if rng.random_bool(0.5) {
        for _ in 0..rng.random_range(0..=2) {
            let n = names[rng.random_range(0..names.len())].clone();
            if !group_by.contains(&n) {
                group_by.push(n);
            }
        }
        for _ in 0..rng.random_range(1..=3) {
            let i = rng.random_range(0..names.len());
            let agg = if kinds[i] == Kind::Str {
                "count"
            } else {
                ["count", "sum", "mean", "min", "max"][rng.random_range(0..5)]
            };
            let out = format!("{agg}_{}", names[i]);
            if !aggs.iter().any(|(a, c): &(&str, String)| format!("{a}_{c}") == out) && !group_by.contains(&out) {
                aggs.push((agg, names[i].clone()));
            }
        }
        group_by.iter().cloned().chain(aggs.iter().map(|(a, c)| format!("{a}_{c}"))).collect()
    } else {
        for n in &names {
            if rng.random_bool(0.4) {
                cols.push(n.clone());
            }
        }
        names.clone()
    };

    let mut order: Vec<(String, bool)> = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let n = out_names[rng.random_range(0..out_names.len())].clone();
        if !order.iter().any(|(o, _)| *o == n) {
            order.push((n, rng.random_bool(0.5)));
        }
    }
    let limit = rng.random_bool(0.3).then(|| rng.random_range(1..=30));
    Q { derive, preds, group_by, aggs, cols, order, limit }
}

fn v_json(v: &V) -> Value {
    match v {
        V::Null => Value::Null,
        V::I(i) => json!(i),
        V::F(f) => json!(f),
        V::S(s) => json!(s),
    }
}

impl Q {
    pub fn to_json(&self) -> Value {
        let mut select: Vec<Value> = Vec::new();
        if self.aggs.is_empty() {
            select.extend(self.cols.iter().map(|c| json!(c)));
        } else {
            select.extend(self.group_by.iter().map(|c| json!(c)));
            select.extend(self.aggs.iter().map(|(a, c)| json!({"agg": a, "col": c})));
        }
        let mut q = json!({
            "select": select,
            "where": self.preds.iter().map(|(c, op, v)| json!({"col": c, "op": op, "value": v_json(v)})).collect::<Vec<_>>(),
            "derive": self.derive.iter().map(|(n, e)| json!({"as": n, "expr": e.render()})).collect::<Vec<_>>(),
            "group_by": self.group_by,
            "order_by": self.order.iter().map(|(c, d)| json!({"col": c, "descending": d})).collect::<Vec<_>>(),
        });
        if let Some(l) = self.limit {
            q["limit"] = json!(l);
        }
        q
    }
}

fn cmp_v(a: &V, b: &V) -> Option<Ordering> {
    match (a, b) {
        (V::I(x), V::I(y)) => Some(x.cmp(y)),
        (V::S(x), V::S(y)) => Some(x.cmp(y)),
        (V::I(x), V::F(y)) => (*x as f64).partial_cmp(y),
        (V::F(x), V::I(y)) => x.partial_cmp(&(*y as f64)),
        (V::F(x), V::F(y)) => x.partial_cmp(y),
        _ => None,
    }
}

fn same_key(a: &V, b: &V) -> bool {
    match (a, b) {
        (V::F(x), V::F(y)) => x == y,
        _ => a == b,
    }
}

fn num(v: &V) -> Option<f64> {
    match v {
        V::I(i) => Some(*i as f64),
        V::F(f) => Some(*f),
        _ => None,
    }
}

/// Row-at-a-time evaluation of the query semantics.
pub fn naive_eval(t: &Table, q: &Q) -> (Vec<String>, Vec<Vec<V>>) {
    let mut names = t.names.clone();
    let mut kinds = t.kinds.clone();
    let mut rows: Vec<Vec<V>> = t.rows.clone();
    if let Some((n, e)) = &q.derive {
        for r in rows.iter_mut() {
            let v = e.eval(&names, r).map_or(V::Null, V::F);
            r.push(v);
        }
        names.push(n.clone());
        kinds.push(Kind::Float);
    }
    let idx = |names: &[String], c: &str| names.iter().position(|n| n == c).unwrap();

    let mut kept = Vec::new();
    for r in rows {
        let mut ok = true;
        for (c, op, v) in &q.preds {
            let cell = &r[idx(&names, c)];
            let pass = match (cell, *op) {
                (V::Null, _) => false,
                (V::S(s), "contains") => match v {
                    V::S(n) => s.contains(n.as_str()),
                    _ => false,
                },
                (x, op) => match cmp_v(x, v) {
                    None => false,
                    Some(o) => match op {
                        "eq" => o == Ordering::Equal,
                        "ne" => o != Ordering::Equal,
                        "lt" => o == Ordering::Less,
                        "le" => o != Ordering::Greater,
                        "gt" => o == Ordering::Greater,
                        _ => o != Ordering::Less,
                    },
                },
            };
            ok &= pass;
        }
        if ok {
            kept.push(r);
        }
    }
    rows = kept;

    if !q.group_by.is_empty() || !q.aggs.is_empty() {
        let keys: Vec<usize> = q.group_by.iter().map(|g| idx(&names, g)).collect();
        let mut groups: Vec<(Vec<V>, Vec<Vec<V>>)> = Vec::new();
        if keys.is_empty() {
            groups.push((Vec::new(), rows.clone()));
        } else {
            for r in &rows {
                let k: Vec<V> = keys.iter().map(|&i| r[i].clone()).collect();
                match groups.iter_mut().find(|(gk, _)| gk.iter().zip(&k).all(|(a, b)| same_key(a, b))) {
                    Some((_, members)) => members.push(r.clone()),
                    None => groups.push((k, vec![r.clone()])),
                }
            }
        }
        let mut out_rows = Vec::new();
        for (k, members) in &groups {
            let mut row = k.clone();
            for (agg, col) in &q.aggs {
                let ci = idx(&names, col);
                let present: Vec<&V> = members.iter().map(|m| &m[ci]).filter(|v| **v != V::Null).collect();
                let v = match *agg {
                    "count" => V::I(present.len() as i64),
                    _ if present.is_empty() => V::Null,
                    "sum" if kinds[ci] == Kind::Int => V::I(present.iter().map(|v| if let V::I(i) = v { *i } else { 0 }).sum()),
                    "sum" => V::F(present.iter().filter_map(|v| num(v)).sum()),
                    "mean" => V::F(present.iter().filter_map(|v| num(v)).sum::<f64>() / present.len() as f64),
                    "min" => (*present.iter().min_by(|a, b| cmp_v(a, b).unwrap()).unwrap()).clone(),
                    _ => {
                        // first maximum wins, like the first minimum above
                        let mut best = present[0];
                        for v in &present[1..] {
                            if cmp_v(v, best) == Some(Ordering::Greater) {
                                best = v;
                            }
                        }
                        best.clone()
                    }
                };
                row.push(v);
            }
            out_rows.push(row);
        }
        names = q.group_by.iter().cloned().chain(q.aggs.iter().map(|(a, c)| format!("{a}_{c}"))).collect();
        rows = out_rows;
    }

    let order: Vec<(usize, bool)> = q.order.iter().map(|(c, d)| (idx(&names, c), *d)).collect();
    rows.sort_by(|a, b| {
        for &(c, desc) in &order {
            let o = match (&a[c], &b[c]) {
                (V::Null, V::Null) => Ordering::Equal,
                (V::Null, _) => Ordering::Greater,
                (_, V::Null) => Ordering::Less,
                (x, y) => {
                    let o = cmp_v(x, y).unwrap_or(Ordering::Equal);
                    if desc { o.reverse() } else { o }
                }
            };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    });
    if let Some(l) = q.limit {
        rows.truncate(l);
    }

    let select: Vec<String> = if q.aggs.is_empty() {
        q.cols.clone()
    } else {
        q.group_by.iter().cloned().chain(q.aggs.iter().map(|(a, c)| format!("{a}_{c}"))).collect()
    };
    if select.is_empty() {
        return (names, rows);
    }
    let picks: Vec<usize> = select.iter().map(|c| idx(&names, c)).collect();
    let rows = rows.into_iter().map(|r| picks.iter().map(|&i| r[i].clone()).collect()).collect();
    (select, rows)
}

pub fn to_dataset(t: &Table) -> Dataset {
    let columns = t
        .names
        .iter()
        .zip(&t.kinds)
        .map(|(n, k)| Column {
            name: n.clone(),
            dtype: match k {
                Kind::Int => DType::Integer,
                Kind::Float => DType::Float,
                Kind::Str => DType::String,
            },
        })
        .collect();
    let rows = t
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| match v {
                    V::Null => Cell::Null,
                    V::I(i) => Cell::Int(*i),
                    V::F(f) => Cell::Float(*f),
                    V::S(s) => Cell::Str(s.clone()),
                })
                .collect()
        })
        .collect();
    Dataset::new(columns, rows, "generated.csv")
}

fn from_cell(c: &Cell) -> V {
    match c {
        Cell::Null => V::Null,
        Cell::Int(i) => V::I(*i),
        Cell::Float(f) => V::F(*f),
        Cell::Str(s) => V::S(s.clone()),
        Cell::Bool(b) => V::S(b.to_string()),
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Runs one generated case through the engine and the oracle. `Err` describes the first mismatch.
pub fn check_query_case(seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let t = gen_table(&mut rng);
    let q = gen_query(&mut rng, &t);
    let spec = QuerySpec::from_json(&q.to_json()).map_err(|e| format!("seed {seed}: spec rejected: {e}"))?;
    let src = to_dataset(&t);
    let before = src.clone();
    let got = execute(&src, &spec).map_err(|e| format!("seed {seed}: engine error {e} for {}", q.to_json()))?;
    if src != before {
        return Err(format!("seed {seed}: source mutated"));
    }
    let (names, rows) = naive_eval(&t, &q);
    let got_names: Vec<String> = got.columns.iter().map(|c| c.name.clone()).collect();
    if got_names != names {
        return Err(format!("seed {seed}: columns {got_names:?} vs oracle {names:?}"));
    }
    if got.rows.len() != rows.len() {
        return Err(format!("seed {seed}: {} rows vs oracle {} for {}", got.rows.len(), rows.len(), q.to_json()));
    }
    for (i, (g, o)) in got.rows.iter().zip(&rows).enumerate() {
        for (c, (gc, oc)) in g.iter().zip(o).enumerate() {
            let ok = match (from_cell(gc), oc) {
                (V::F(a), V::F(b)) => close(a, *b),
                (a, b) => a == *b,
            };
            if !ok {
                return Err(format!("seed {seed}: row {i} col {c}: {gc:?} vs oracle {oc:?} for {}", q.to_json()));
            }
        }
    }
    Ok(())
}

/// Linear-interpolation quartiles and 1.5 IQR fences, computed by hand.
pub fn iqr_outliers(values: &[f64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    let (low, high) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    s.iter().filter(|v| **v < low || **v > high).count()
}

/// Compares `data_profile` outlier counts with [`iqr_outliers`] on one random column.
pub fn check_outlier_case(seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.random_range(1..=120);
    let mut values: Vec<Option<f64>> = (0..n)
        .map(|_| (!rng.random_bool(0.05)).then(|| rng.random_range(-1000..1000) as f64 / 10.0))
        .collect();
    // plant a few extremes so the fences actually bite
    for _ in 0..rng.random_range(0..4) {
        let i = rng.random_range(0..values.len());
        values[i] = Some(rng.random_range(5000..9000) as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    }
    let d = Dataset::new(
        vec![Column { name: "x".into(), dtype: DType::Float }],
        values.iter().map(|v| vec![v.map_or(Cell::Null, Cell::Float)]).collect(),
        "generated.csv",
    );
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let expected = iqr_outliers(&present);
    let got = data_profile(&d).columns[0].outlier_count.unwrap_or(0);
    if got == expected {
        Ok(())
    } else {
        Err(format!("seed {seed}: outlier_count {got} vs oracle {expected}"))
    }
}
