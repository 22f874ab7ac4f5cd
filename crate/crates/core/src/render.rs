//! SVG charts, Graphviz DOT export and a built-in force-directed graph layout.
//!
//! All output is plain text assembled in a fixed order with fixed-precision
//! numbers, so identical inputs give byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{ChartKind, GraphData};
use crate::clustering::Stage;
use crate::error::{Error, Result};
use crate::samdp::SamdpView;

pub const LAYOUT_ITERS: usize = 200;
/// Initial step cap of the layout, as a fraction of the unit frame.
pub const LAYOUT_START_TEMP: f64 = 0.1;

const MARGIN: f64 = 60.0;
const NODE_RADIUS: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    #[default]
    Tab10,
    Set2,
    Dark2,
}

impl Palette {
    pub fn colors(self) -> &'static [&'static str] {
        match self {
            Palette::Tab10 => &[
                "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
                "#17becf",
            ],
            Palette::Set2 => &[
                "#66c2a5", "#fc8d62", "#8da0cb", "#e78ac3", "#a6d854", "#ffd92f", "#e5c494", "#b3b3b3",
            ],
            Palette::Dark2 => &[
                "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
            ],
        }
    }

    pub fn color(self, i: i64) -> &'static str {
        let colors = self.colors();
        colors[i.rem_euclid(colors.len() as i64) as usize]
    }
}

impl FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab10" => Ok(Palette::Tab10),
            "set2" => Ok(Palette::Set2),
            "dark2" => Ok(Palette::Dark2),
            _ => Err(Error::Config(format!("unknown palette {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub palette: Palette,
    pub point_size: f64,
    pub output_path: PathBuf,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 800,
            height: 600,
            palette: Palette::Tab10,
            point_size: 3.0,
            output_path: PathBuf::from("chart.svg"),
        }
    }
}

impl RenderConfig {
    pub fn with_output(&self, path: impl Into<PathBuf>) -> Self {
        Self {
            output_path: path.into(),
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("width and height must be positive".into()));
        }
        if !(self.point_size > 0.0) {
            return Err(Error::Config("point_size must be positive".into()));
        }
        Ok(())
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Viridis, linearly interpolated between five anchors; `t` in `[0, 1]`.
fn viridis(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn extent(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi - lo > 0.0 {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    width: f64,
    height: f64,
    right: f64,
}

impl Frame {
    fn new(config: &RenderConfig, x: (f64, f64), y: (f64, f64), legend_width: f64) -> Self {
        Frame {
            x0: x.0,
            x1: x.1,
            y0: y.0,
            y1: y.1,
            width: config.width as f64,
            height: config.height as f64,
            right: legend_width,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let span = (self.width - 2.0 * MARGIN - self.right).max(1.0);
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * span
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.height - 2.0 * MARGIN).max(1.0);
        self.height - MARGIN - (y - self.y0) / (self.y1 - self.y0) * span
    }
}

fn open_svg(out: &mut String, config: &RenderConfig, title: &str) {
    let (w, h) = (config.width, config.height);
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        w as f64 / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame) {
    let (l, r) = (f.px(f.x0), f.px(f.x1));
    let (b, t) = (f.py(f.y0), f.py(f.y1));
    let _ = writeln!(
        out,
        r##"<rect class="axes" x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        r - l,
        b - t
    );
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v:.2}</text>"#,
            l - 6.0,
            y + 4.0
        );
    }
}

fn legend_entry(out: &mut String, i: usize, x: f64, color: &str, label: &str) {
    let y = MARGIN + 10.0 + 20.0 * i as f64;
    let _ = writeln!(
        out,
        r#"<g class="legend-entry"><rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text></g>"#,
        y - 10.0,
        x + 18.0,
        y,
        escape(label)
    );
}

/// SVG text of a chart.
pub fn chart_svg(data: &GraphData, config: &RenderConfig) -> Result<String> {
    config.check()?;
    data.check()?;
    if data.is_empty() {
        return Err(Error::Input("chart has no data".into()));
    }
    if data.values.iter().chain(&data.x).chain(&data.y).any(|v| !v.is_finite()) {
        return Err(Error::Input("chart data contains non-finite values".into()));
    }
    let mut out = String::new();
    open_svg(&mut out, config, &data.title);
    match data.kind {
        ChartKind::Scatter => scatter(&mut out, data, config),
        ChartKind::Bar => bars(&mut out, data, config),
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn scatter(out: &mut String, data: &GraphData, config: &RenderConfig) {
    let f = Frame::new(
        config,
        extent(data.x.iter().copied()),
        extent(data.y.iter().copied()),
        140.0,
    );
    axes(out, &f);
    let (vlo, vhi) = extent(data.values.iter().copied());
    let color = |v: f64| -> String {
        if data.is_categorical() {
            config.palette.color(v.round() as i64).to_string()
        } else {
            viridis((v - vlo) / (vhi - vlo))
        }
    };
    out.push_str("<g class=\"points\">\n");
    for i in 0..data.len() {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}"/>"#,
            f.px(data.x[i]),
            f.py(data.y[i]),
            config.point_size,
            color(data.values[i])
        );
    }
    out.push_str("</g>\n");

    let lx = f.width - MARGIN - 120.0;
    if let Some(labels) = &data.legend {
        let present: BTreeSet<i64> = data.values.iter().map(|v| v.round() as i64).collect();
        for (i, v) in present.into_iter().enumerate() {
            let label = labels.get(&v).cloned().unwrap_or_else(|| v.to_string());
            legend_entry(out, i, lx, config.palette.color(v), &label);
        }
    } else if data.colorbar {
        let top = MARGIN;
        let height = (f.height - 2.0 * MARGIN).max(1.0);
        out.push_str("<g class=\"colorbar\">\n");
        let steps = 32;
        for s in 0..steps {
            let t = 1.0 - (s as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{lx:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
                top + height * s as f64 / steps as f64,
                height / steps as f64 + 0.5,
                viridis(t)
            );
        }
        for (v, y) in [(vhi, top + 4.0), (vlo, top + height)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{y:.2}" font-size="11">{v:.2}</text>"#,
                lx + 22.0
            );
        }
        out.push_str("</g>\n");
    }
}

fn bars(out: &mut String, data: &GraphData, config: &RenderConfig) {
    let err = |i: usize| data.error.as_ref().map_or(0.0, |e| e[i]);
    let lo = (0..data.len()).map(|i| data.values[i] - err(i)).fold(0.0, f64::min);
    let hi = (0..data.len()).map(|i| data.values[i] + err(i)).fold(0.0, f64::max);
    let n = data.len() as f64;
    let f = Frame::new(config, (-0.5, n - 0.5), extent([lo, hi].into_iter()), 140.0);
    axes(out, &f);

    let groups: Vec<String> = data.groups.clone().unwrap_or_default();
    let names: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    let group_color = |g: &str| {
        config
            .palette
            .color(names.iter().position(|n| *n == g).unwrap_or(0) as i64)
    };
    let slot = f.px(1.0) - f.px(0.0);
    let zero = f.py(0.0);
    out.push_str("<g class=\"bars\">\n");
    for i in 0..data.len() {
        let (v, cx) = (data.values[i], f.px(i as f64));
        let top = f.py(v).min(zero);
        let color = groups.get(i).map_or(config.palette.color(0), |g| group_color(g));
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            cx - 0.4 * slot,
            0.8 * slot,
            (f.py(v) - zero).abs()
        );
        if data.error.is_some() {
            let (a, b) = (f.py(v - err(i)), f.py(v + err(i)));
            let _ = writeln!(
                out,
                r##"<path class="error-bar" d="M{:.2} {a:.2}V{b:.2}M{:.2} {a:.2}H{:.2}M{:.2} {b:.2}H{:.2}" stroke="#222" fill="none"/>"##,
                cx,
                cx - 0.15 * slot,
                cx + 0.15 * slot,
                cx - 0.15 * slot,
                cx + 0.15 * slot
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            f.py(f.y0) + 14.0,
            data.x[i]
        );
    }
    out.push_str("</g>\n");
    let lx = f.width - MARGIN - 120.0;
    for (i, name) in names.iter().enumerate() {
        legend_entry(out, i, lx, group_color(name), name);
    }
}

/// Writes [`chart_svg`] to `config.output_path`.
pub fn render_chart(data: &GraphData, config: &RenderConfig) -> Result<()> {
    let svg = chart_svg(data, config)?;
    write_file(&config.output_path, &svg)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn dot_shape(stage: Stage) -> &'static str {
    match stage {
        Stage::Initial => "doublecircle",
        Stage::Intermediate => "circle",
        Stage::Terminal => "octagon",
    }
}

/// Graphviz text of a view. Nodes are `Cluster_<id>` in ascending order,
/// edges sorted by `(from, to, action)`.
pub fn emit_dot(view: &SamdpView, verbose: bool) -> String {
    let mut nodes: Vec<_> = view.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    let mut edges: Vec<_> = view.edges.iter().collect();
    edges.sort_by_key(|e| (e.from, e.to, e.action));

    let mut out = String::from("digraph samdp {\n");
    let _ = writeln!(out, "  label=\"{}\";", view.kind);
    for n in nodes {
        let _ = writeln!(out, "  Cluster_{} [shape={}];", n.id, dot_shape(n.stage));
    }
    for e in edges {
        let _ = write!(out, "  Cluster_{} -> Cluster_{}", e.from, e.to);
        if verbose {
            match e.action {
                Some(a) => {
                    let _ = write!(out, " [label=\"a={a} p={:.2}\"]", e.probability);
                }
                None => {
                    let _ = write!(out, " [label=\"p={:.2}\"]", e.probability);
                }
            }
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
    out
}

/// Node positions in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub positions: BTreeMap<usize, (f64, f64)>,
    /// Ideal edge length `sqrt(1 / n)`.
    pub spring_length: f64,
}

/// Fruchterman–Reingold layout on the unit square.
///
/// Nodes start uniformly at random from `seed`; each of the
/// [`LAYOUT_ITERS`] steps is capped by a temperature cooling linearly from
/// [`LAYOUT_START_TEMP`] to zero. Edge direction and multiplicity are ignored.
pub fn layout_graph(view: &SamdpView, seed: u64) -> Layout {
    let ids: Vec<usize> = view
        .nodes
        .iter()
        .map(|n| n.id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = ids.len();
    let k = (1.0 / n.max(1) as f64).sqrt();
    if n <= 1 {
        return Layout {
            positions: ids.into_iter().map(|id| (id, (0.5, 0.5))).collect(),
            spring_length: k,
        };
    }
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let springs: BTreeSet<(usize, usize)> = view
        .edges
        .iter()
        .filter_map(|e| Some((*index.get(&e.from)?, *index.get(&e.to)?)))
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    for it in 0..LAYOUT_ITERS {
        let temp = LAYOUT_START_TEMP * (1.0 - it as f64 / LAYOUT_ITERS as f64);
        let mut disp = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (d, u) = separation(pos[i], pos[j], i, j);
                let force = k * k / d;
                for c in 0..2 {
                    disp[i][c] += u[c] * force;
                    disp[j][c] -= u[c] * force;
                }
            }
        }
        for &(i, j) in &springs {
            let (d, u) = separation(pos[i], pos[j], i, j);
            let force = d * d / k;
            for c in 0..2 {
                disp[i][c] -= u[c] * force;
                disp[j][c] += u[c] * force;
            }
        }
        for i in 0..n {
            let len = disp[i][0].hypot(disp[i][1]);
            if len > 0.0 {
                let step = len.min(temp) / len;
                for c in 0..2 {
                    pos[i][c] = (pos[i][c] + disp[i][c] * step).clamp(0.0, 1.0);
                }
            }
        }
    }
    // Clamping can stack nodes in a corner; pull coincident ones apart.
    for i in 1..n {
        while (0..i).any(|j| pos[j] == pos[i]) {
            pos[i][0] = (pos[i][0] + 1e-3 * (i as f64)).rem_euclid(1.0);
        }
    }
    Layout {
        positions: ids.into_iter().zip(pos).map(|(id, p)| (id, (p[0], p[1]))).collect(),
        spring_length: k,
    }
}

/// Distance from `b` to `a` and the unit vector pointing that way; coincident
/// points get a fixed direction depending on their indices.
fn separation(a: [f64; 2], b: [f64; 2], i: usize, j: usize) -> (f64, [f64; 2]) {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    let d = dx.hypot(dy);
    if d > 1e-12 {
        (d, [dx / d, dy / d])
    } else {
        let angle = (i * 7 + j * 13) as f64;
        (1e-12, [angle.cos(), angle.sin()])
    }
}

fn octagon(cx: f64, cy: f64, r: f64) -> String {
    (0..8)
        .map(|i| {
            let a = std::f64::consts::PI / 8.0 + i as f64 * std::f64::consts::PI / 4.0;
            format!("{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// SVG drawing of a view at the given layout.
pub fn graph_svg(view: &SamdpView, layout: &Layout, config: &RenderConfig, verbose: bool) -> Result<String> {
    config.check()?;
    let (w, h) = (config.width as f64, config.height as f64);
    let at = |id: usize| -> Result<(f64, f64)> {
        let &(x, y) = layout
            .positions
            .get(&id)
            .ok_or_else(|| Error::Input(format!("layout has no position for cluster {id}")))?;
        Ok((MARGIN + x * (w - 2.0 * MARGIN), MARGIN + y * (h - 2.0 * MARGIN)))
    };
    let mut out = String::new();
    open_svg(&mut out, config, &format!("SAMDP ({})", view.kind));
    out.push_str(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"8\" markerHeight=\"8\" orient=\"auto\"><path d=\"M0 0L10 5L0 10z\" fill=\"#555\"/></marker></defs>\n",
    );
    let mut edges: Vec<_> = view.edges.iter().collect();
    edges.sort_by_key(|e| (e.from, e.to, e.action));
    out.push_str("<g class=\"edges\">\n");
    for e in edges {
        let (x1, y1) = at(e.from)?;
        let (x2, y2) = at(e.to)?;
        let d = (x2 - x1).hypot(y2 - y1).max(1e-9);
        let (ux, uy) = ((x2 - x1) / d, (y2 - y1) / d);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-width="{:.2}" marker-end="url(#arrow)"/>"##,
            x1 + ux * NODE_RADIUS,
            y1 + uy * NODE_RADIUS,
            x2 - ux * (NODE_RADIUS + 2.0),
            y2 - uy * (NODE_RADIUS + 2.0),
            1.0 + 2.0 * e.probability
        );
        if verbose {
            let label = match e.action {
                Some(a) => format!("a={a} p={:.2}", e.probability),
                None => format!("p={:.2}", e.probability),
            };
            let _ = writeln!(
                out,
                r#"<text class="edge-label" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{label}</text>"#,
                (x1 + x2) / 2.0,
                (y1 + y2) / 2.0 - 3.0
            );
        }
    }
    out.push_str("</g>\n<g class=\"nodes\">\n");
    let mut nodes: Vec<_> = view.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    for node in nodes {
        let (x, y) = at(node.id)?;
        let color = config.palette.color(match node.stage {
            Stage::Initial => 0,
            Stage::Intermediate => 1,
            Stage::Terminal => 2,
        });
        let r = NODE_RADIUS;
        let _ = write!(out, r#"<g class="node {}">"#, node.stage);
        match node.stage {
            Stage::Terminal => {
                let _ = write!(
                    out,
                    r##"<polygon points="{}" fill="{color}" stroke="#222"/>"##,
                    octagon(x, y, r)
                );
            }
            stage => {
                let _ = write!(
                    out,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{color}" stroke="#222"/>"##
                );
                if stage == Stage::Initial {
                    let _ = write!(
                        out,
                        r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="#222"/>"##,
                        r - 4.0
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text></g>"#,
            y + 4.0,
            node.id
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samdp::{Edge, Node, ViewKind};

    fn view(n: usize, edges: &[(usize, usize, Option<usize>, f64)]) -> SamdpView {
        SamdpView {
            kind: ViewKind::Complete,
            nodes: (0..n)
                .map(|id| Node {
                    id,
                    stage: if id == 0 {
                        Stage::Initial
                    } else if id + 1 == n {
                        Stage::Terminal
                    } else {
                        Stage::Intermediate
                    },
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(from, to, action, probability)| Edge {
                    from,
                    to,
                    action,
                    probability,
                    count: 1,
                })
                .collect(),
        }
    }

    fn scatter(values: Vec<f64>, legend: Option<BTreeMap<i64, String>>) -> GraphData {
        let n = values.len();
        GraphData {
            kind: ChartKind::Scatter,
            title: "t".into(),
            x: (0..n).map(|i| i as f64).collect(),
            y: (0..n).map(|i| (i * i) as f64).collect(),
            values,
            error: None,
            colorbar: legend.is_none(),
            legend,
            groups: None,
        }
    }

    #[test]
    fn dot_edge_labels() {
        let v = view(2, &[(0, 1, Some(2), 1.0)]);
        let verbose = emit_dot(&v, true);
        assert!(verbose.contains("  Cluster_0 -> Cluster_1 [label=\"a=2 p=1.00\"];\n"));
        assert!(verbose.contains("Cluster_0 [shape=doublecircle]"));
        assert!(verbose.contains("Cluster_1 [shape=octagon]"));
        let quiet = emit_dot(&v, false);
        assert!(quiet.contains("  Cluster_0 -> Cluster_1;\n"));
        assert!(!quiet.contains("a=2"));
    }

    #[test]
    fn dot_is_sorted() {
        let v = view(3, &[(1, 2, Some(0), 0.5), (0, 2, Some(1), 0.25), (0, 1, Some(0), 0.75)]);
        let dot = emit_dot(&v, true);
        let a = dot.find("Cluster_0 -> Cluster_1").unwrap();
        let b = dot.find("Cluster_0 -> Cluster_2").unwrap();
        let c = dot.find("Cluster_1 -> Cluster_2").unwrap();
        assert!(a < b && b < c);
        assert!(dot.contains("p=0.25"));
    }

    #[test]
    fn categorical_legend_counts_present_values() {
        let labels = BTreeMap::from([(0, "a".to_string()), (1, "b".to_string()), (2, "c".to_string())]);
        let svg = chart_svg(&scatter(vec![0.0, 1.0, 1.0], Some(labels)), &RenderConfig::default()).unwrap();
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn scalar_chart_has_colorbar_and_is_deterministic() {
        let data = scatter(vec![0.1, 0.5, 0.9], None);
        let a = chart_svg(&data, &RenderConfig::default()).unwrap();
        let b = chart_svg(&data, &RenderConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("class=\"colorbar\""));
        assert!(a.contains(&viridis(0.0)));
    }

    #[test]
    fn bar_chart_counts_bars() {
        let data = GraphData {
            kind: ChartKind::Bar,
            title: "bars & <stuff>".into(),
            x: (0..5).map(|i| i as f64).collect(),
            y: vec![],
            values: vec![1.0, -2.0, 3.0, 0.5, 0.0],
            error: Some(vec![0.1, 0.2, 0.0, 0.3, 0.0]),
            legend: None,
            colorbar: false,
            groups: Some(
                ["intermediate", "intermediate", "initial", "terminal", "terminal"]
                    .map(String::from)
                    .to_vec(),
            ),
        };
        let svg = chart_svg(&data, &RenderConfig::default()).unwrap();
        assert_eq!(svg.matches("class=\"bar\"").count(), 5);
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 3);
        assert!(svg.contains("bars &amp; &lt;stuff&gt;"));
    }

    #[test]
    fn empty_chart_is_rejected() {
        assert!(matches!(
            chart_svg(&scatter(vec![], None), &RenderConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn single_node_is_centered() {
        let l = layout_graph(&view(1, &[]), 3);
        assert_eq!(l.positions[&0], (0.5, 0.5));
    }

    #[test]
    fn spring_pair_settles_near_ideal_length() {
        let l = layout_graph(&view(2, &[(0, 1, Some(0), 1.0)]), 11);
        let (a, b) = (l.positions[&0], l.positions[&1]);
        let d = (a.0 - b.0).hypot(a.1 - b.1);
        let ratio = d / l.spring_length;
        assert!((0.1..=2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn layout_is_seeded_and_separates_nodes() {
        let v = view(
            6,
            &[
                (0, 1, Some(0), 1.0),
                (1, 2, Some(0), 1.0),
                (2, 5, Some(1), 0.5),
                (3, 4, None, 0.2),
            ],
        );
        let a = layout_graph(&v, 5);
        assert_eq!(a, layout_graph(&v, 5));
        let pts: Vec<_> = a.positions.values().collect();
        for i in 0..pts.len() {
            for j in 0..i {
                assert_ne!(pts[i], pts[j]);
            }
        }
        let svg = graph_svg(&v, &a, &RenderConfig::default(), true).unwrap();
        assert!(svg.contains("a=0 p=1.00"));
        assert_eq!(svg.matches("<polygon").count(), 1);
    }
}
