//! CSV, JSON and SVG renderings of a benchmark matrix.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchRow;
use crate::isa::Variant;

pub const CSV_HEADER: [&str; 8] =
    ["workload", "variant", "cycles", "instructions", "energy_j", "pm_bytes", "dm_bytes", "speedup"];

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub version: u32,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn new(rows: Vec<BenchRow>) -> BenchReport {
        BenchReport { version: REPORT_VERSION, rows }
    }
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cycles,
    Energy,
}

impl Metric {
    fn value(self, r: &BenchRow) -> f64 {
        match self {
            Metric::Cycles => r.cycles as f64,
            Metric::Energy => r.energy_j * 1e6,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Cycles => "cycles per inference",
            Metric::Energy => "energy per inference (uJ)",
        }
    }

    fn label(self, v: f64) -> String {
        match self {
            Metric::Cycles => format!("{v:.0}"),
            Metric::Energy => format!("{v:.1}"),
        }
    }
}

const COLORS: [&str; 5] = ["#7f7f7f", "#1f77b4", "#2ca02c", "#ff7f0e", "#d62728"];
const PANEL_W: f64 = 230.0;
const PLOT_H: f64 = 180.0;
const TOP: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart, one panel per workload with its own scale.
pub fn svg_chart(rows: &[BenchRow], metric: Metric) -> String {
    let mut workloads: Vec<&str> = Vec::new();
    for r in rows {
        if !workloads.contains(&r.workload.as_str()) {
            workloads.push(&r.workload);
        }
    }
    let width = PANEL_W * workloads.len().max(1) as f64 + 20.0;
    let height = TOP + PLOT_H + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="18" font-size="14">{}</text>"#, metric.title());
    for (wi, w) in workloads.iter().enumerate() {
        let x0 = 10.0 + PANEL_W * wi as f64;
        let group: Vec<&BenchRow> = rows.iter().filter(|r| r.workload == *w).collect();
        let max = group.iter().map(|r| metric.value(r)).fold(0.0, f64::max);
        let bar_w = (PANEL_W - 30.0) / group.len().max(1) as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x0 + 5.0, TOP - 14.0, escape(w));
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = TOP + PLOT_H,
            x2 = x0 + PANEL_W - 20.0
        );
        for (bi, r) in group.iter().enumerate() {
            let v = metric.value(r);
            let h = if max > 0.0 { v / max * PLOT_H } else { 0.0 };
            let x = x0 + 5.0 + bar_w * bi as f64;
            let y = TOP + PLOT_H - h;
            let color = COLORS[r.variant.index()];
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{color}"><title>{} {}: {}</title></rect>"#,
                bar_w - 4.0,
                escape(w),
                r.variant,
                metric.label(v)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x + (bar_w - 4.0) / 2.0,
                TOP + PLOT_H + 14.0,
                r.variant
            );
        }
    }
    let ly = TOP + PLOT_H + 40.0;
    for v in Variant::ALL {
        let lx = 10.0 + 60.0 * v.index() as f64;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/>"#, ly - 9.0, COLORS[v.index()]);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{v}</text>"#, lx + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes bench.csv, bench.json, cycles.svg and energy.svg into `dir`.
pub fn write_report(dir: &Path, rows: &[BenchRow]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("bench.csv"), to_csv(rows))?;
    let json = serde_json::to_string_pretty(&BenchReport::new(rows.to_vec())).map_err(io::Error::other)?;
    fs::write(dir.join("bench.json"), json + "\n")?;
    fs::write(dir.join("cycles.svg"), svg_chart(rows, Metric::Cycles))?;
    fs::write(dir.join("energy.svg"), svg_chart(rows, Metric::Energy))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(w: &str, v: Variant, cycles: u64) -> BenchRow {
        BenchRow {
            workload: w.into(),
            variant: v,
            cycles,
            instructions: cycles / 2,
            energy_j: cycles as f64 * 1e-8,
            pm_bytes: 400,
            dm_bytes: 64,
            speedup: 100.0 / cycles as f64,
        }
    }

    #[test]
    fn csv_columns_and_order() {
        let rows = vec![row("a", Variant::V0, 100), row("a", Variant::V4, 40)];
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("a,v0,100,50,"));
        assert!(lines[2].starts_with("a,v4,40,20,"));
        assert_eq!(to_csv(&[]).lines().count(), 1);
        let back: Vec<BenchRow> =
            csv::Reader::from_reader(csv.as_bytes()).deserialize().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn json_is_strict() {
        let rep = BenchReport::new(vec![row("a", Variant::V2, 10)]);
        let text = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<BenchReport>(&text).unwrap(), rep);
        let extra = text.replacen("\"version\"", "\"extra\":0,\"version\"", 1);
        assert!(serde_json::from_str::<BenchReport>(&extra).is_err());
    }

    #[test]
    fn svg_has_one_bar_per_row() {
        let rows: Vec<BenchRow> = Variant::ALL.iter().map(|&v| row("x<y", v, 100 - 10 * v.index() as u64)).collect();
        let svg = svg_chart(&rows, Metric::Cycles);
        assert_eq!(svg.matches("<title>").count(), 5);
        assert!(svg.contains("x&lt;y"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
