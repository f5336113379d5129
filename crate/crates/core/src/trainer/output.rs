//! CSV tables, the learning-rate chart and per-class report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grid::GridResult;
use super::metrics::MetricsReport;
use crate::error::{Error, Result};
use crate::graphstore::EntityClass;

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub arch: String,
    pub geometry: String,
    pub layers: usize,
    pub subgraph_depth: usize,
    pub curvature: Option<f64>,
    pub lr: f64,
    pub seed: u64,
    pub split: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

/// Identifies the run a metrics row belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub arch: String,
    pub geometry: String,
    pub layers: usize,
    pub subgraph_depth: usize,
    pub curvature: Option<f64>,
    pub lr: f64,
    pub seed: u64,
    pub split: String,
}

/// One row per present class plus an `ALL` row with macro values.
pub fn metrics_rows(key: &RunKey, report: &MetricsReport) -> Vec<MetricsRow> {
    let row = |class: String, p: f64, r: f64, f: f64| MetricsRow {
        arch: key.arch.clone(),
        geometry: key.geometry.clone(),
        layers: key.layers,
        subgraph_depth: key.subgraph_depth,
        curvature: key.curvature,
        lr: key.lr,
        seed: key.seed,
        split: key.split.clone(),
        class,
        precision: p,
        recall: r,
        f1: f,
        macro_f1: report.macro_f1,
    };
    let mut rows: Vec<MetricsRow> = report
        .per_class
        .iter()
        .map(|m| row(m.class.as_str().to_string(), m.precision, m.recall, m.f1))
        .collect();
    rows.push(row("ALL".into(), report.macro_precision, report.macro_recall, report.macro_f1));
    rows
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::format("csv", e)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "arch", "geometry", "layers", "subgraph_depth", "curvature", "lr", "seed", "split", "class", "precision",
            "recall", "f1", "macro_f1",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(csv_err)
}

pub fn read_metrics_csv(bytes: &[u8]) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)
}

#[derive(Serialize)]
struct GridRow {
    curvature: Option<f64>,
    lr: f64,
    val_macro_f1: f64,
    test_macro_f1: f64,
    epochs: f64,
    status: String,
}

/// One row per `(curvature, lr)` cell, medians over seeds.
pub fn grid_csv(grid: &GridResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if grid.cells.is_empty() {
        w.write_record(["curvature", "lr", "val_macro_f1", "test_macro_f1", "epochs", "status"])
            .map_err(csv_err)?;
    }
    for c in &grid.cells {
        w.serialize(GridRow {
            curvature: c.curvature,
            lr: c.lr,
            val_macro_f1: c.val_macro_f1,
            test_macro_f1: c.test_macro_f1,
            epochs: c.epochs,
            status: c.status.clone(),
        })
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(csv_err)
}

/// Every individual run of the grid, with its seed.
pub fn grid_runs_csv(grid: &GridResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &grid.runs {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(csv_err)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Line chart of median validation macro-F1 against learning rate (log
/// axis), one polyline per curvature.
pub fn grid_svg(grid: &GridResult, title: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let lrs: Vec<f64> = {
        let mut v: Vec<f64> = grid.cells.iter().map(|c| c.lr).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (lo, hi) = match (lrs.first(), lrs.last()) {
        (Some(a), Some(b)) if b > a => (a.log10(), b.log10()),
        (Some(a), _) => (a.log10() - 0.5, a.log10() + 0.5),
        _ => (-4.0, -2.0),
    };
    let x = |lr: f64| left + (lr.log10() - lo) / (hi - lo) * pw;
    let y = |f: f64| top + (1.0 - f.clamp(0.0, 1.0)) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let yy = y(f);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{yy}" x2="{}" y2="{yy}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{f:.1}</text>"##,
            left + pw,
            left - 6.0,
            yy + 4.0
        );
    }
    for &lr in &lrs {
        let xx = x(lr);
        let _ = writeln!(
            s,
            r#"<line x1="{xx}" y1="{}" x2="{xx}" y2="{}" stroke="black"/><text x="{xx}" y="{}" text-anchor="middle">{lr:e}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">learning rate</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">macro-F1</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, c) in grid.curvatures().into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = grid
            .cells
            .iter()
            .filter(|cell| cell.curvature.map(f64::to_bits) == c.map(f64::to_bits))
            .map(|cell| (cell.lr, cell.val_macro_f1))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(lr, f)| format!("{:.2},{:.2}", x(lr), y(f))).collect();
        let label = c.map_or("euclidean".to_string(), |c| format!("c = {c}"));
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{label}</title></polyline>"#,
            path.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{label}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-class tables, one per run: seven class rows (absent classes marked)
/// followed by a macro row.
pub fn render_report(rows: &[MetricsRow]) -> String {
    let mut groups: BTreeMap<String, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let key = format!(
            "{} {} {}-layer depth-{} c={} lr={} seed={} [{}]",
            r.geometry,
            r.arch,
            r.layers,
            r.subgraph_depth,
            r.curvature.map_or("-".into(), |c| c.to_string()),
            r.lr,
            r.seed,
            r.split
        );
        groups.entry(key).or_default().push(r);
    }
    let mut out = String::new();
    for (key, rows) in groups {
        let _ = writeln!(out, "## {key}\n");
        let _ = writeln!(out, "| class | precision | recall | f1 |");
        let _ = writeln!(out, "|---|---|---|---|");
        for class in EntityClass::ALL {
            match rows.iter().find(|r| r.class == class.as_str()) {
                Some(r) => {
                    let _ = writeln!(out, "| {} | {:.4} | {:.4} | {:.4} |", class, r.precision, r.recall, r.f1);
                }
                None => {
                    let _ = writeln!(out, "| {class} | absent | absent | absent |");
                }
            }
        }
        if let Some(r) = rows.iter().find(|r| r.class == "ALL") {
            let _ = writeln!(out, "| macro | {:.4} | {:.4} | {:.4} |", r.precision, r.recall, r.f1);
        }
        out.push('\n');
    }
    out
}
