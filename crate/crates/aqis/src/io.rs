//! CSV output helpers.
//!
//! All floating-point values are written with 17 significant digits so that
//! repeated runs produce byte-identical files on any IEEE-754 platform.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Fixed decimal formatting used for every float that lands in a CSV file.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_owned())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Str(s) => s.clone(),
        }
    }
}

/// Writes a header plus rows; rows are emitted in iteration order.
pub fn write_csv<P, I>(path: P, header: &[&str], rows: I) -> std::io::Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = Vec<Cell>>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}
