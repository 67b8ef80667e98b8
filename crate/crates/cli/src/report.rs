//! CSV tables and the JSON summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};

use crate::config::Diagnostic;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.12e}"),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self { name: name.to_owned(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    /// Header plus rows, no preamble.
    pub fn body(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// What an experiment hands back to the runner.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub results: Map<String, Json>,
    /// Human-readable reasons the run is flagged (non-convergence, broken sandwich).
    pub flags: Vec<String>,
}

/// `# key = value` lines echoing the resolved config.
pub fn preamble(config: &BTreeMap<String, Json>) -> String {
    let mut s = String::new();
    for (k, v) in config {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

pub fn write_tables(dir: &Path, config: &BTreeMap<String, Json>, tables: &[Table]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let head = preamble(config);
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, format!("{head}{}", t.body()))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_json(path: &Path, value: &Json) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    fs::write(path, text)
}

pub fn summary(
    config: &BTreeMap<String, Json>,
    outcome: &Outcome,
    files: &[PathBuf],
    wall_time_s: f64,
) -> Json {
    let names: Vec<String> =
        files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    json!({
        "config": config,
        "files": names,
        "flags": outcome.flags,
        "results": outcome.results,
        "status": if outcome.flags.is_empty() { "ok" } else { "flagged" },
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall_time_s,
    })
}

pub fn error_record(kind: &str, message: &str, diagnostics: &[Diagnostic], config: Option<&BTreeMap<String, Json>>) -> Json {
    json!({
        "config": config,
        "diagnostics": diagnostics,
        "error": kind,
        "message": message,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_render() {
        assert_eq!(Cell::from(0.1).render(), "1.000000000000e-1");
        assert_eq!(Cell::from(3usize).render(), "3");
        assert_eq!(Cell::from("{1}|{2,3}").render(), "\"{1}|{2,3}\"");
        assert_eq!(Cell::from(None::<f64>).render(), "");
    }

    #[test]
    fn body_has_header_and_rows() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![1usize.into(), 0.5.into()]);
        assert_eq!(t.body(), "a,b\n1,5.000000000000e-1\n");
    }

    #[test]
    fn summary_keys_are_sorted() {
        let cfg = BTreeMap::from([("seed".to_owned(), json!(0))]);
        let s = summary(&cfg, &Outcome::default(), &[], 0.0);
        let text = serde_json::to_string(&s).unwrap();
        let keys = ["\"config\"", "\"files\"", "\"flags\"", "\"results\"", "\"status\"", "\"version\"", "\"wall_time_s\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
