//! Dense storage for finite point samples and the CSV point format.
//!
//! One point per row, `d` numeric columns, optional header row. A header is
//! detected when the first record does not parse as numbers.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Result};

/// A sequence of points in ℝ^d stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(Self { dim, coords: Vec::new() })
    }

    pub fn with_capacity(dim: usize, n: usize) -> Result<Self> {
        let mut set = Self::new(dim)?;
        set.coords.reserve(dim * n);
        Ok(set)
    }

    /// Builds a set from a flat row-major buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut set = Self::with_capacity(dim, rows.len())?;
        for row in rows {
            set.push(row.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(invalid(format!(
                "point has {} coordinates, expected {}",
                point.len(),
                self.dim
            )));
        }
        self.coords.extend_from_slice(point);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut set: Option<PointSet> = None;
        let mut row = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            row.clear();
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(values) => row.extend(values),
                Err(_) if line == 0 => continue,
                Err(e) => return Err(invalid(format!("row {}: {e}", line + 1))),
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(invalid(format!("row {}: non-finite value {bad}", line + 1)));
            }
            match set.as_mut() {
                Some(s) => s
                    .push(&row)
                    .map_err(|e| invalid(format!("row {}: {e}", line + 1)))?,
                None => {
                    let mut s = PointSet::new(row.len())?;
                    s.push(&row)?;
                    set = Some(s);
                }
            }
        }
        set.ok_or(crate::Error::NoData)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Writes a header `x0,…,x{d-1}` followed by one row per point, using the
    /// shortest round-trip float representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for p in self.iter() {
            wtr.write_record(p.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
