//! Deterministic SVG charts on a fixed 800x600 canvas.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::Dataset;
use super::query::{execute, AggFn, AggSpec, QuerySpec, SelectItem};
use super::ToolError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 510.0;
const MAX_BINS: u32 = 1000;
const BAR_FILL: &str = "#4e79a7";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    Line,
    Scatter,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YAggregate {
    pub agg: AggFn,
    pub col: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum YSpec {
    Column(String),
    Aggregate(YAggregate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<YSpec>,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<u32>,
}

fn bad(msg: impl Into<String>) -> ToolError {
    ToolError::BadSpec(msg.into())
}

impl ChartSpec {
    pub fn from_json(v: &Value) -> Result<ChartSpec, ToolError> {
        serde_json::from_value(v.clone()).map_err(|e| bad(e.to_string()))
    }

    fn y_label(&self) -> String {
        match &self.y {
            None => "count".into(),
            Some(YSpec::Column(c)) => c.clone(),
            Some(YSpec::Aggregate(a)) => format!("{}({})", a.agg.as_str(), a.col),
        }
    }
}

/// Tick positions at 1/2/5 x 10^k steps covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = if lo == hi {
        if lo == 0.0 { (0.0, 1.0) } else { (lo - lo.abs() / 2.0, hi + hi.abs() / 2.0) }
    } else {
        (lo, hi)
    };
    let step = nice_step((hi - lo) / 5.0);
    let first = (lo / step).floor() * step;
    let last = (hi / step).ceil() * step;
    let n = ((last - first) / step).round() as usize;
    let dec = step_decimals(step);
    let scale = 10f64.powi(dec as i32);
    (0..=n).map(|i| ((first + i as f64 * step) * scale).round() / scale).collect()
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn step_decimals(step: f64) -> usize {
    (-step.log10().floor()).max(0.0) as usize
}

fn tick_label(v: f64, step: f64) -> String {
    let s = format!("{:.*}", step_decimals(step), v);
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') { s[1..].to_string() } else { s }
}

/// Coordinates with at most two decimals and no trailing zeros.
fn coord(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() && c != '\n' && c != '\t' => {}
            c => out.push(c),
        }
    }
    out
}

struct Axis {
    lo: f64,
    hi: f64,
    ticks: Vec<f64>,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Axis {
        let ticks = nice_ticks(lo, hi);
        Axis { lo: ticks[0], hi: *ticks.last().unwrap(), ticks }
    }

    fn step(&self) -> f64 {
        if self.ticks.len() > 1 { self.ticks[1] - self.ticks[0] } else { 1.0 }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.lo) / (self.hi - self.lo) * (RIGHT - LEFT)
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - (v - self.lo) / (self.hi - self.lo) * (BOTTOM - TOP)
    }
}

fn bounds(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn numeric_column(d: &Dataset, name: &str, role: &str) -> Result<usize, ToolError> {
    let i = d.require_column(name).map_err(bad)?;
    if !d.columns[i].dtype.is_numeric() {
        return Err(bad(format!("{role} column {name} must be numeric")));
    }
    Ok(i)
}

fn truncate_label(s: &str) -> String {
    if s.chars().count() > 16 { format!("{}…", s.chars().take(15).collect::<String>()) } else { s.to_string() }
}

fn y_axis_svg(out: &mut String, axis: &Axis) {
    out.push_str("<g class=\"y-axis\">\n");
    let _ = writeln!(out, "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333333\"/>", l = coord(LEFT), t = coord(TOP), b = coord(BOTTOM));
    for &t in &axis.ticks {
        let y = coord(axis.y(t));
        let _ = writeln!(out, "<line class=\"grid\" x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#e5e5e5\"/>", coord(LEFT), coord(RIGHT));
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            coord(LEFT - 8.0),
            coord(axis.y(t) + 4.0),
            tick_label(t, axis.step())
        );
    }
    out.push_str("</g>\n");
}

fn x_baseline_svg(out: &mut String) {
    let _ = writeln!(out, "<line x1=\"{}\" y1=\"{b}\" x2=\"{}\" y2=\"{b}\" stroke=\"#333333\"/>", coord(LEFT), coord(RIGHT), b = coord(BOTTOM));
}

fn x_axis_numeric_svg(out: &mut String, axis: &Axis) {
    out.push_str("<g class=\"x-axis\">\n");
    x_baseline_svg(out);
    for &t in &axis.ticks {
        let x = coord(axis.x(t));
        let _ = writeln!(out, "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#333333\"/>", coord(BOTTOM), coord(BOTTOM + 5.0));
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            coord(BOTTOM + 20.0),
            tick_label(t, axis.step())
        );
    }
    out.push_str("</g>\n");
}

fn bar_data(d: &Dataset, spec: &ChartSpec) -> Result<Vec<(String, f64)>, ToolError> {
    let x = d.require_column(&spec.x).map_err(bad)?;
    match &spec.y {
        None => Err(bad("bar charts need a y column or aggregate")),
        Some(YSpec::Column(y)) => {
            let y = numeric_column(d, y, "y")?;
            Ok(d.rows.iter().filter_map(|r| r[y].as_f64().map(|v| (r[x].render(), v))).collect())
        }
        Some(YSpec::Aggregate(a)) => {
            let q = QuerySpec {
                group_by: vec![spec.x.clone()],
                select: vec![
                    SelectItem::Column(spec.x.clone()),
                    SelectItem::Aggregate(AggSpec { agg: a.agg, col: a.col.clone(), alias: Some("__value".into()) }),
                ],
                ..QuerySpec::default()
            };
            let grouped = execute(d, &q).map_err(|e| bad(e.to_string().trim_start_matches("bad query: ").to_string()))?;
            Ok(grouped.rows.iter().filter_map(|r| r[1].as_f64().map(|v| (r[0].render(), v))).collect())
        }
    }
}

fn bars_svg(out: &mut String, bars: &[(String, f64)]) {
    let (lo, hi) = bounds(bars.iter().map(|b| b.1)).unwrap_or((0.0, 1.0));
    let axis = Axis::new(lo.min(0.0), hi.max(0.0));
    y_axis_svg(out, &axis);
    out.push_str("<g class=\"x-axis\">\n");
    x_baseline_svg(out);
    let band = (RIGHT - LEFT) / bars.len().max(1) as f64;
    let rotate = bars.len() > 10;
    for (i, (label, _)) in bars.iter().enumerate() {
        let cx = coord(LEFT + band * (i as f64 + 0.5));
        let ty = coord(BOTTOM + 18.0);
        if rotate {
            let _ = writeln!(out, "<text x=\"{cx}\" y=\"{ty}\" text-anchor=\"end\" font-size=\"11\" transform=\"rotate(-45 {cx} {ty})\">{}</text>", escape(&truncate_label(label)));
        } else {
            let _ = writeln!(out, "<text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" font-size=\"12\">{}</text>", escape(&truncate_label(label)));
        }
    }
    out.push_str("</g>\n<g class=\"marks\">\n");
    let zero = axis.y(0.0);
    for (i, (label, v)) in bars.iter().enumerate() {
        let top = axis.y(*v).min(zero);
        let h = (axis.y(*v) - zero).abs();
        let _ = writeln!(
            out,
            "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{BAR_FILL}\" data-label=\"{}\" data-value=\"{}\"/>",
            coord(LEFT + band * i as f64 + band * 0.1),
            coord(top),
            coord(band * 0.8),
            coord(h),
            escape(label),
            v
        );
    }
    out.push_str("</g>\n");
}

fn histogram_svg(out: &mut String, values: &[f64], bins: u32) {
    let (min, max) = bounds(values.iter().copied()).unwrap_or((0.0, 1.0));
    let (min, max) = if min == max { (min - 0.5, max + 0.5) } else { (min, max) };
    let width = (max - min) / bins as f64;
    let mut counts = vec![0u64; bins as usize];
    for &v in values {
        let b = (((v - min) / width).floor() as i64).clamp(0, bins as i64 - 1);
        counts[b as usize] += 1;
    }
    let y_axis = Axis::new(0.0, counts.iter().copied().max().unwrap_or(0) as f64);
    let x_axis = Axis::new(min, max);
    y_axis_svg(out, &y_axis);
    x_axis_numeric_svg(out, &x_axis);
    out.push_str("<g class=\"marks\">\n");
    for (i, &c) in counts.iter().enumerate() {
        let lo = min + width * i as f64;
        let hi = if i + 1 == counts.len() { max } else { min + width * (i + 1) as f64 };
        let (x0, x1) = (x_axis.x(lo), x_axis.x(hi));
        let _ = writeln!(
            out,
            "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{BAR_FILL}\" stroke=\"#ffffff\" data-range=\"{lo},{hi}\" data-value=\"{c}\"/>",
            coord(x0),
            coord(y_axis.y(c as f64)),
            coord(x1 - x0),
            coord(BOTTOM - y_axis.y(c as f64))
        );
    }
    out.push_str("</g>\n");
}

fn points_svg(out: &mut String, pts: &[(f64, f64)], line: bool) {
    let (xlo, xhi) = bounds(pts.iter().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let (ylo, yhi) = bounds(pts.iter().map(|p| p.1)).unwrap_or((0.0, 1.0));
    let (xa, ya) = (Axis::new(xlo, xhi), Axis::new(ylo, yhi));
    y_axis_svg(out, &ya);
    x_axis_numeric_svg(out, &xa);
    out.push_str("<g class=\"marks\">\n");
    if line && !pts.is_empty() {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", coord(xa.x(*x)), coord(ya.y(*y)))).collect();
        let _ = writeln!(out, "<polyline class=\"line\" fill=\"none\" stroke=\"{BAR_FILL}\" stroke-width=\"2\" points=\"{}\"/>", coords.join(" "));
    }
    let r = if line { "3" } else { "4" };
    for (x, y) in pts {
        let _ = writeln!(
            out,
            "<circle class=\"point\" cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"{BAR_FILL}\" data-x=\"{x}\" data-y=\"{y}\"/>",
            coord(xa.x(*x)),
            coord(ya.y(*y))
        );
    }
    out.push_str("</g>\n");
}

/// Renders `spec` over `d` as a standalone SVG document.
pub fn chart_render(d: &Dataset, spec: &ChartSpec) -> Result<String, ToolError> {
    if spec.bins.is_some() && spec.kind != ChartKind::Histogram {
        return Err(bad("bins applies only to histograms"));
    }
    let mut body = String::new();
    match spec.kind {
        ChartKind::Bar => bars_svg(&mut body, &bar_data(d, spec)?),
        ChartKind::Histogram => {
            if spec.y.is_some() {
                return Err(bad("histograms take no y"));
            }
            let bins = spec.bins.unwrap_or(10);
            if bins == 0 || bins > MAX_BINS {
                return Err(bad(format!("bins must be between 1 and {MAX_BINS}")));
            }
            let x = numeric_column(d, &spec.x, "x")?;
            histogram_svg(&mut body, &d.numeric_values(x), bins);
        }
        ChartKind::Line | ChartKind::Scatter => {
            let x = numeric_column(d, &spec.x, "x")?;
            let y = match &spec.y {
                Some(YSpec::Column(y)) => numeric_column(d, y, "y")?,
                Some(YSpec::Aggregate(_)) => return Err(bad("line and scatter charts take a y column, not an aggregate")),
                None => return Err(bad("line and scatter charts need a y column")),
            };
            let mut pts: Vec<(f64, f64)> =
                d.rows.iter().filter_map(|r| Some((r[x].as_f64()?, r[y].as_f64()?))).collect();
            if spec.kind == ChartKind::Line {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            points_svg(&mut body, &pts, spec.kind == ChartKind::Line);
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">",
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(out, "<text class=\"title\" x=\"{}\" y=\"32\" text-anchor=\"middle\" font-size=\"18\">{}</text>", coord(WIDTH / 2.0), escape(&spec.title));
    out.push_str(&body);
    let _ = writeln!(out, "<text class=\"x-label\" x=\"{}\" y=\"580\" text-anchor=\"middle\" font-size=\"14\">{}</text>", coord((LEFT + RIGHT) / 2.0), escape(&spec.x));
    let mid = coord((TOP + BOTTOM) / 2.0);
    let _ = writeln!(
        out,
        "<text class=\"y-label\" x=\"20\" y=\"{mid}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 {mid})\">{}</text>",
        escape(&spec.y_label())
    );
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::dataset::{Cell, Column, DType};
    use serde_json::json;

    fn table() -> Dataset {
        Dataset::new(
            vec![
                Column { name: "cat".into(), dtype: DType::String },
                Column { name: "v".into(), dtype: DType::Integer },
            ],
            (1..=10).map(|i| vec![Cell::Str(["a", "b", "c"][(i % 3) as usize].into()), Cell::Int(i)]).collect(),
            "t.csv",
        )
    }

    fn count_bars(svg: &str) -> usize {
        svg.matches("<rect class=\"bar\"").count()
    }

    fn spec(v: Value) -> ChartSpec {
        ChartSpec::from_json(&v).unwrap()
    }

    #[test]
    fn ticks_are_nice() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(0.0, 3000.0), vec![0.0, 1000.0, 2000.0, 3000.0]);
        assert_eq!(nice_ticks(0.0, 0.3), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(nice_ticks(0.0, 0.0), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        for (lo, hi) in [(1.0, 10.0), (-3.5, 17.25), (0.001, 0.0042), (100.0, 100.0)] {
            let t = nice_ticks(lo, hi);
            assert!(t[0] <= lo && *t.last().unwrap() >= hi, "{lo} {hi} {t:?}");
            let step = t[1] - t[0];
            let m = step / 10f64.powf(step.log10().floor());
            assert!([1.0, 2.0, 5.0, 10.0].iter().any(|n| (m - n).abs() < 1e-9), "{step}");
        }
    }

    #[test]
    fn aggregated_bar_has_one_bar_per_category() {
        let svg = chart_render(&table(), &spec(json!({"kind": "bar", "x": "cat", "y": {"agg": "sum", "col": "v"}, "title": "t"}))).unwrap();
        assert_eq!(count_bars(&svg), 3);
        // first appearance order: i=1 -> b, i=2 -> c, i=3 -> a
        let labels: Vec<&str> = svg.match_indices("data-label=\"").map(|(i, _)| &svg[i + 12..i + 13]).collect();
        assert_eq!(labels, ["b", "c", "a"]);
    }

    #[test]
    fn histogram_bins_evenly() {
        let svg = chart_render(&table(), &spec(json!({"kind": "histogram", "x": "v", "bins": 5}))).unwrap();
        assert_eq!(count_bars(&svg), 5);
        assert_eq!(svg.matches("data-value=\"2\"").count(), 5);
    }

    #[test]
    fn deterministic_bytes_and_escaping() {
        let s = spec(json!({"kind": "scatter", "x": "v", "y": "v", "title": "a < b & \"c\""}));
        let a = chart_render(&table(), &s).unwrap();
        assert_eq!(a, chart_render(&table(), &s).unwrap());
        assert!(a.contains("a &lt; b &amp; &quot;c&quot;"));
        assert!(a.starts_with("<svg "));
        assert_eq!(a.matches("<circle class=\"point\"").count(), 10);
    }

    #[test]
    fn spec_validation() {
        let t = table();
        for s in [
            json!({"kind": "histogram", "x": "cat"}),
            json!({"kind": "histogram", "x": "v", "bins": 0}),
            json!({"kind": "histogram", "x": "v", "y": "v"}),
            json!({"kind": "line", "x": "v"}),
            json!({"kind": "line", "x": "cat", "y": "v"}),
            json!({"kind": "bar", "x": "cat"}),
            json!({"kind": "bar", "x": "cat", "y": "cat"}),
            json!({"kind": "bar", "x": "ghost", "y": "v"}),
            json!({"kind": "bar", "x": "cat", "y": "v", "bins": 3}),
        ] {
            let parsed = ChartSpec::from_json(&s);
            let r = parsed.and_then(|p| chart_render(&t, &p));
            assert!(matches!(r, Err(ToolError::BadSpec(_))), "{s}");
        }
        assert!(matches!(ChartSpec::from_json(&json!({"kind": "pie", "x": "v"})), Err(ToolError::BadSpec(_))));
    }

    #[test]
    fn coordinates_are_compact() {
        assert_eq!(coord(12.5), "12.5");
        assert_eq!(coord(3.0), "3");
        assert_eq!(coord(-0.001), "0");
        // 1.005 is stored just below 1.005
        assert_eq!(coord(1.005), "1");
        assert_eq!(coord(10.0), "10");
        assert_eq!(coord(700.1), "700.1");
    }
}
