//! CSV input and CSV/JSON output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Named numeric columns read from a headed CSV file.
pub struct Table {
    pub path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    /// 1-based file line of each data row.
    lines: Vec<u64>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers: Vec<String> = reader
            .headers()
            .with_context(|| format!("{}: cannot read the header row", path.display()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            bail!("{}: missing header row", path.display());
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let row = e.position().map_or(0, |p| p.line());
                anyhow::anyhow!("{}: row {row}: {e}", path.display())
            })?;
            lines.push(record.position().map_or(0, |p| p.line()));
            rows.push(record.iter().map(str::to_owned).collect());
        }
        Ok(Self {
            path: path.to_owned(),
            headers,
            rows,
            lines,
        })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Column `name` parsed as finite numbers. Errors name the file line and
    /// the column.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let Some(idx) = self.headers.iter().position(|h| h == name) else {
            bail!(
                "{}: no column '{name}' (columns: {})",
                self.path.display(),
                self.headers.join(", ")
            );
        };
        self.rows
            .iter()
            .zip(&self.lines)
            .map(|(row, line)| {
                let raw = row.get(idx).map(String::as_str).unwrap_or("");
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => bail!(
                        "{}: row {line}, column '{name}': cannot parse '{raw}' as a finite number",
                        self.path.display()
                    ),
                }
            })
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// A CSV cell: numbers in shortest round-trip form, `None` as empty.
pub enum Cell {
    Num(f64),
    Int(i64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Empty => String::new(),
        }
    }
}

pub fn write_csv(
    path: &Path,
    headers: &[&str],
    rows: impl IntoIterator<Item = Vec<Cell>>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

/// `out` with its extension replaced by `suffix`, e.g. `fit.json` to
/// `fit.plot.csv`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}
