use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::Point;

/// Writes points under an `x0,x1,...` header.
pub fn write_points_csv(path: &Path, points: &[Point]) -> Result<()> {
    let dim = points.first().map_or(0, Point::dim);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..dim).map(|i| format!("x{i}")))?;
    for p in points {
        w.write_record(p.coords().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV with a header row into points. All columns are
/// coordinates.
pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let coords = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Io(format!(
                        "{}: row {}: not a number: {s:?}",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Point::new(coords)?);
    }
    Ok(out)
}

/// Small CSV table kept as strings, used to feed plots from written files.
pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Io(format!("missing column {name}")))
    }

    /// Numeric value or `None` for an empty field.
    pub fn num(&self, row: usize, col: usize) -> Option<f64> {
        let s = self.rows[row][col].trim();
        if s.is_empty() {
            None
        } else {
            s.parse().ok()
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(format!("{}: {e}", path.display()))
    })?))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}
