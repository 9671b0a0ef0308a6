//! Report files: CSV tables, SVG plots and a manifest of hashes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ErrorReport, PhaseReport, SearchTrace, SweepCurve};
use crate::datagen::write_json;
use crate::{Error, Result};

pub const REPORT_MANIFEST: &str = "manifest.json";

/// Dataset and candidate points in the first two principal axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub explained: Vec<f64>,
    pub dataset: Vec<Vec<f64>>,
    pub candidates: Vec<Vec<f64>>,
}

/// One result written by `eval`/`search` and consumed by `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultFile {
    Errors(ErrorReport),
    PhaseErrors(PhaseReport),
    Sweep(SweepCurve),
    Search(SearchTrace),
    Pca(PcaReport),
}

impl ResultFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// Every `*.json` result under `dir` (not recursive), by file name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != REPORT_MANIFEST))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const L: f64 = 70.0;
const R: f64 = 170.0;
const T: f64 = 40.0;
const B: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    (x0, x1, y0, y1)
}

fn frame(title: &str, xlabel: &str, ylabel: &str, b: (f64, f64, f64, f64)) -> String {
    let (x0, x1, y0, y1) = b;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (W - R + L) / 2.0, escape(title));
    let (px0, px1, py0, py1) = (L, W - R, H - B, T);
    let _ = writeln!(s, r#"<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let gx = px0 + f * (px1 - px0);
        let gy = py0 + f * (py1 - py0);
        let _ = writeln!(s, r#"<line x1="{gx:.2}" y1="{py0}" x2="{gx:.2}" y2="{:.2}" stroke="black"/>"#, py0 + 5.0);
        let _ = writeln!(s, r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, py0 + 18.0, tick(x0 + f * (x1 - x0)));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{gy:.2}" x2="{px0}" y2="{gy:.2}" stroke="black"/>"#, px0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, px0 - 8.0, gy + 4.0, tick(y0 + f * (y1 - y0)));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (px0 + px1) / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn map(b: (f64, f64, f64, f64), x: f64, y: f64) -> (f64, f64) {
    let (x0, x1, y0, y1) = b;
    (L + (x - x0) / (x1 - x0) * (W - R - L), (H - B) - (y - y0) / (y1 - y0) * (H - B - T))
}

fn legend(s: &mut String, series: &[Series], line: bool) {
    for (i, se) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let y = T + 10.0 + 18.0 * i as f64;
        let x = W - R + 15.0;
        if line {
            let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/>"#, x + 20.0);
        } else {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{y}" r="4" fill="{c}"/>"#, x + 10.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(&se.name));
    }
}

pub fn svg_line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let b = bounds(series);
    let mut s = frame(title, xlabel, ylabel, b);
    for (i, se) in series.iter().enumerate() {
        let pts: Vec<String> = se
            .points
            .iter()
            .map(|(x, y)| {
                let (px, py) = map(b, *x, *y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" ")
        );
    }
    legend(&mut s, series, true);
    s.push_str("</svg>\n");
    s
}

pub fn svg_scatter_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let b = bounds(series);
    let mut s = frame(title, xlabel, ylabel, b);
    for (i, se) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for (x, y) in &se.points {
            let (px, py) = map(b, *x, *y);
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{c}" fill-opacity="0.7"/>"#);
        }
    }
    legend(&mut s, series, false);
    s.push_str("</svg>\n");
    s
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct ReportManifest {
    version: String,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

fn write(out: &Path, name: &str, body: &str, written: &mut Vec<FileEntry>) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(FileEntry {
        name: name.into(),
        sha256: hex::encode(Sha256::digest(body.as_bytes())),
    });
    Ok(())
}

/// Writes all tables and plots for `results` into `out` and returns the file
/// names written. Output bytes depend only on `results`.
pub fn emit_report(results: &[ResultFile], out: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();

    let mut a = String::from("method,relative_mean,relative_std,absolute_mean,absolute_std\n");
    let mut b = String::from(
        "method,mask_ratio,relative_mean,relative_std,absolute_mean,absolute_std,relative_ave,relative_max,absolute_ave,absolute_max\n",
    );
    let mut phases = String::from("method,mask_ratio,phase,min_relative_error\n");
    let mut trace = String::from("method,calls,error,best_error\n");
    let mut sweep = String::from("method,mask_ratio,relative_min,relative_mean\n");
    let mut pca = String::from("set,index,pc1,pc2\n");
    let (mut trace_series, mut sweep_series, mut pca_series) = (Vec::new(), Vec::new(), Vec::new());
    let mut explained = Vec::new();

    for r in results {
        match r {
            ResultFile::Errors(e) if e.mask_ratio == 0.0 => {
                let _ = writeln!(
                    a,
                    "{},{},{},{},{}",
                    e.method,
                    num(e.relative.min.mean),
                    num(e.relative.min.std),
                    num(e.absolute.min.mean),
                    num(e.absolute.min.std)
                );
            }
            ResultFile::Errors(e) => {
                let _ = writeln!(
                    b,
                    "{},{},{},{},{},{},{},{},{},{}",
                    e.method,
                    e.mask_ratio,
                    num(e.relative.min.mean),
                    num(e.relative.min.std),
                    num(e.absolute.min.mean),
                    num(e.absolute.min.std),
                    num(e.relative.mean.mean),
                    num(e.relative.max.mean),
                    num(e.absolute.mean.mean),
                    num(e.absolute.max.mean)
                );
            }
            ResultFile::PhaseErrors(p) => {
                for (l, v) in p.labels.iter().zip(&p.per_phase) {
                    let _ = writeln!(phases, "{},{},{},{}", p.method, p.mask_ratio, l, opt(*v));
                }
                let _ = writeln!(phases, "{},{},average,{}", p.method, p.mask_ratio, num(p.average));
            }
            ResultFile::Search(t) => {
                for s in &t.steps {
                    let _ = writeln!(trace, "{},{},{},{}", t.method.name(), s.calls, num(s.error), num(s.best_error));
                }
                trace_series.push(Series {
                    name: t.method.name().into(),
                    points: t.steps.iter().map(|s| (s.calls as f64, s.best_error)).collect(),
                });
            }
            ResultFile::Sweep(c) => {
                for p in &c.points {
                    let _ = writeln!(sweep, "{},{},{},{}", c.method, p.mask_ratio, num(p.relative_min), num(p.relative_mean));
                }
                sweep_series.push(Series {
                    name: c.method.clone(),
                    points: c.points.iter().map(|p| (p.mask_ratio, p.relative_min)).collect(),
                });
            }
            ResultFile::Pca(p) => {
                explained.clone_from(&p.explained);
                for (set, pts) in [("dataset", &p.dataset), ("candidates", &p.candidates)] {
                    for (i, q) in pts.iter().enumerate() {
                        let _ = writeln!(pca, "{set},{i},{},{}", num(q[0]), num(*q.get(1).unwrap_or(&0.0)));
                    }
                    pca_series.push(Series {
                        name: set.into(),
                        points: pts.iter().map(|q| (q[0], *q.get(1).unwrap_or(&0.0))).collect(),
                    });
                }
            }
        }
    }
    write(out, "tableA.csv", &a, &mut written)?;
    write(out, "tableB.csv", &b, &mut written)?;
    write(out, "phase_errors.csv", &phases, &mut written)?;
    write(out, "search_trace.csv", &trace, &mut written)?;
    write(out, "sweep.csv", &sweep, &mut written)?;
    write(out, "pca.csv", &pca, &mut written)?;
    let pc_label = |i: usize| match explained.get(i) {
        Some(v) => format!("PC{} ({:.1}% variance)", i + 1, 100.0 * v),
        None => format!("PC{}", i + 1),
    };
    write(
        out,
        "search_trace.svg",
        &svg_line_plot("Best error versus simulator calls", "simulator calls", "best phase error", &trace_series),
        &mut written,
    )?;
    write(
        out,
        "sweep.svg",
        &svg_line_plot("Error versus missing ratio", "mask ratio", "min relative error", &sweep_series),
        &mut written,
    )?;
    write(
        out,
        "pca.svg",
        &svg_scatter_plot("Alloy distribution", &pc_label(0), &pc_label(1), &pca_series),
        &mut written,
    )?;

    let inputs = results
        .iter()
        .map(|r| {
            let text = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
            let name = match r {
                ResultFile::Errors(e) => format!("errors:{}:{}", e.method, e.mask_ratio),
                ResultFile::PhaseErrors(p) => format!("phase_errors:{}", p.method),
                ResultFile::Sweep(c) => format!("sweep:{}", c.method),
                ResultFile::Search(t) => format!("search:{}", t.method.name()),
                ResultFile::Pca(_) => "pca".into(),
            };
            Ok(FileEntry {
                name,
                sha256: hex::encode(Sha256::digest(text.as_bytes())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = written.iter().map(|f| f.name.clone()).collect();
    write_json(
        &out.join(REPORT_MANIFEST),
        &ReportManifest {
            version: crate::VERSION.into(),
            inputs,
            outputs: written,
        },
    )?;
    Ok(names)
}
