//! CSV tables, run manifests and plots.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use wavehom::io::format_float;

/// Version tag of the manifest layout.
pub const MANIFEST_SCHEMA: &str = "wavehom-manifest/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Text(String::new()), Into::into)
    }
}

/// A CSV table with a fixed column order.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header of {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// A line plot drawn from table columns.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub name: String,
    pub table: String,
    pub x: &'static str,
    pub y: &'static str,
    /// Column whose distinct values split the data into series.
    pub group: Option<&'static str>,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Value,
    pub stages: Vec<Stage>,
    pub derived: Value,
    pub files: Vec<FileEntry>,
    pub failures: Vec<String>,
    pub plot_errors: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn entry(dir: &Path, path: &Path) -> Result<FileEntry> {
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().into_owned(),
        bytes: fs::metadata(path)?.len(),
        sha256: sha256_file(path)?,
    })
}

/// Everything a subcommand produced.
#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<Table>,
    pub plots: Vec<PlotSpec>,
    pub derived: Value,
    pub stages: Vec<Stage>,
    /// Extra files already written into the output directory.
    pub extra: Vec<PathBuf>,
    /// Parameter points that failed; the run continues and exits nonzero.
    pub failures: Vec<String>,
}

/// Write tables, then plots, then the manifest listing every file with its hash.
pub fn emit(dir: &Path, subcommand: &str, config: Value, out: &Output) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    for t in &out.tables {
        files.push(t.write(dir)?);
    }
    let mut plot_errors = Vec::new();
    for p in &out.plots {
        // Plot failures are recorded but never fail the numeric run.
        match out.tables.iter().find(|t| t.name == p.table).map(|t| plot(dir, t, p)) {
            Some(Ok(path)) => files.push(path),
            Some(Err(e)) => plot_errors.push(format!("{}: {e:#}", p.name)),
            None => plot_errors.push(format!("{}: no table {}", p.name, p.table)),
        }
    }
    files.extend(out.extra.iter().cloned());
    let mut entries = files.iter().map(|f| entry(dir, f)).collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        subcommand: subcommand.into(),
        config,
        stages: out.stages.clone(),
        derived: out.derived.clone(),
        files: entries,
        failures: out.failures.clone(),
        plot_errors,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn series(table: &Table, p: &PlotSpec) -> Result<Series> {
    let col = |name: &str| table.column(name).with_context(|| format!("no column {name}"));
    let (xi, yi) = (col(p.x)?, col(p.y)?);
    let gi = p.group.map(col).transpose()?;
    let mut out: Series = Vec::new();
    for row in &table.rows {
        let (Some(x), Some(y)) = (row[xi].as_f64(), row[yi].as_f64()) else { continue };
        let keep = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
        if !keep(x, p.log_x) || !keep(y, p.log_y) {
            continue;
        }
        let tf = |v: f64, log: bool| if log { v.log10() } else { v };
        let key = gi.map_or(String::new(), |g| row[g].render());
        match out.iter_mut().find(|s| s.0 == key) {
            Some(s) => s.1.push((tf(x, p.log_x), tf(y, p.log_y))),
            None => out.push((key, vec![(tf(x, p.log_x), tf(y, p.log_y))])),
        }
    }
    anyhow::ensure!(out.iter().any(|s| !s.1.is_empty()), "nothing to plot");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Static SVG line plot of one table.
pub fn plot(dir: &Path, table: &Table, p: &PlotSpec) -> Result<PathBuf> {
    let data = series(table, p)?;
    let pts = data.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let (w, h, m) = (640.0, 420.0, 60.0);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let axis = |name: &str, log: bool| if log { format!("log10 {name}") } else { name.to_string() };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{}</text>\n\
         <text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        w - 2.0 * m,
        h - 2.0 * m,
        w / 2.0,
        h - 15.0,
        escape(&axis(p.x, p.log_x)),
        h / 2.0,
        h / 2.0,
        escape(&axis(p.y, p.log_y)),
        w / 2.0,
        escape(&p.name),
    );
    for v in [x0, x1] {
        svg += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{v:.3}</text>\n", sx(v), h - m + 15.0);
    }
    for v in [y0, y1] {
        svg += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3}</text>\n", m - 4.0, sy(v) + 4.0);
    }
    for (k, (label, pts)) in data.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg += &format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", path.join(" "));
        for &(x, y) in pts {
            svg += &format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n", sx(x), sy(y));
        }
        if !label.is_empty() {
            let ly = m + 16.0 * (k as f64 + 1.0);
            svg += &format!(
                "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{} = {}</text>\n",
                w - m - 120.0,
                escape(p.group.unwrap_or("")),
                escape(label)
            );
        }
    }
    svg += "</svg>\n";
    let path = dir.join(format!("{}.svg", p.name));
    fs::write(&path, svg)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_round_trip_floats() {
        let dir = std::env::temp_dir().join(format!("wavehom-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec![0.1.into(), 3usize.into(), "x,y".into()]);
        let path = t.write(&dir).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b,c\n1.0000000000000001e-1,3,\"x,y\"\n");
        let spec = PlotSpec { name: "p".into(), table: "t".into(), x: "a", y: "b", group: None, log_x: true, log_y: false };
        assert!(plot(&dir, &t, &spec).is_ok());
        let bad = PlotSpec { y: "c", ..spec };
        assert!(plot(&dir, &t, &bad).is_err());
        fs::remove_dir_all(dir).unwrap();
    }
}
