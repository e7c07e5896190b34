//! String-celled trace table backing `trace.csv`.
//!
//! Numbers are stored in their printed form so that verdicts computed from a
//! fresh run and from a re-read file see bit-identical inputs.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
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

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u128> for Cell {
    fn from(x: u128) -> Self {
        Cell::Int(x.min(i64::MAX as u128) as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e15)`.
pub fn format_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Trace {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            bail!("row has {} cells, trace has {} columns", row.len(), self.columns.len());
        }
        if let Some(Cell::Num(x)) = row.iter().find(|c| matches!(c, Cell::Num(x) if !x.is_finite())) {
            bail!("non-finite value {x} in trace row {}", self.rows.len() + 1);
        }
        self.rows.push(row.iter().map(Cell::render).collect());
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| anyhow!("trace has no column `{name}`"))
    }

    pub fn text(&self, row: usize, name: &str) -> Result<&str> {
        let j = self.index(name)?;
        Ok(&self.rows[row][j])
    }

    pub fn num(&self, row: usize, name: &str) -> Result<f64> {
        let cell = self.text(row, name)?;
        cell.parse::<f64>()
            .with_context(|| format!("row {}, column `{name}`: `{cell}` is not a number", row + 1))
    }

    pub fn nums(&self, name: &str) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.num(i, name)).collect()
    }

    /// Row indices grouped by the value of `key`, in order of first appearance.
    pub fn groups(&self, key: &str) -> Result<Vec<(String, Vec<usize>)>> {
        let j = self.index(key)?;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            match out.iter_mut().find(|(k, _)| *k == row[j]) {
                Some((_, idx)) => idx.push(i),
                None => out.push((row[j].clone(), vec![i])),
            }
        }
        Ok(out)
    }

    /// Rows whose `key` column equals `value`.
    pub fn select(&self, key: &str, value: &str) -> Result<Vec<usize>> {
        let j = self.index(key)?;
        Ok((0..self.len()).filter(|&i| self.rows[i][j] == value).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| anyhow!("flushing csv: {e}"))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_csv(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}
