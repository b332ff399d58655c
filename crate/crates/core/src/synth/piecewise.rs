use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::curves::DensityOracle;
use crate::error::{invalid, Result};
use crate::hypergrid::{CellIndex, GridSpec};
use crate::points::PointSet;
use crate::synth::overlap_volume;

/// A density constant on finitely many grid cells and zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantDensity {
    grid: GridSpec,
    cells: BTreeMap<CellIndex, f64>,
}

#[derive(Serialize, Deserialize)]
struct CellValue {
    index: CellIndex,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    spec: GridSpec,
    cells: Vec<CellValue>,
}

impl PiecewiseConstantDensity {
    /// Fails unless values are finite, nonnegative and integrate to 1
    /// within `1e-12`.
    pub fn new(grid: GridSpec, cells: impl IntoIterator<Item = (CellIndex, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (c, v) in cells {
            if c.0.len() != grid.dim() {
                return Err(invalid("cell index dimension does not match grid"));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("density value {v} must be finite and nonnegative")));
            }
            if map.insert(c, v).is_some() {
                return Err(invalid("duplicate cell"));
            }
        }
        let total: f64 = map.values().map(|v| v * grid.cell_volume()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("density integrates to {total}, not 1")));
        }
        Ok(Self { grid, cells: map })
    }

    /// Rescales nonnegative weights into a density.
    pub fn normalized(grid: GridSpec, cells: impl IntoIterator<Item = (CellIndex, f64)>) -> Result<Self> {
        let cells: Vec<(CellIndex, f64)> = cells.into_iter().collect();
        let total: f64 = cells.iter().map(|(_, v)| v * grid.cell_volume()).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("weights must have a positive finite sum"));
        }
        let vol = grid.cell_volume();
        let mut scaled: Vec<(CellIndex, f64)> = cells.into_iter().map(|(c, v)| (c, v / total)).collect();
        // One correction step absorbs the rounding of the division.
        let again: f64 = scaled.iter().map(|(_, v)| v * vol).sum();
        for (_, v) in &mut scaled {
            *v /= again;
        }
        Self::new(grid, scaled)
    }

    /// Pairwise distinct positive values on `cells`, in random order.
    pub fn random_distinct(grid: GridSpec, cells: Vec<CellIndex>, seed: u64) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("need at least one cell"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..cells.len())
            .map(|i| 1.0 + i as f64 + 0.5 * rng.random::<f64>())
            .collect();
        values.shuffle(&mut rng);
        Self::normalized(grid, cells.into_iter().zip(values))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn value(&self, cell: &CellIndex) -> f64 {
        self.cells.get(cell).copied().unwrap_or(0.0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellIndex, f64)> + '_ {
        self.cells.iter().map(|(c, &v)| (c, v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Smallest box covering every cell.
    pub fn support_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in self.cells.keys() {
            let (a, b) = self.grid.cell_bounds(c);
            for j in 0..d {
                lo[j] = lo[j].min(a[j]);
                hi[j] = hi[j].max(b[j]);
            }
        }
        (lo, hi)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let stored = Stored {
            spec: self.grid.clone(),
            cells: self.cells.iter().map(|(c, &v)| CellValue { index: c.clone(), value: v }).collect(),
        };
        serde_json::to_value(stored).expect("serializable")
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_json_value())?;
        Ok(())
    }

    pub fn write_json_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_json(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let s: Stored = serde_json::from_reader(reader)?;
        Self::new(s.spec, s.cells.into_iter().map(|c| (c.index, c.value)))
    }

    pub fn read_json_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl DensityOracle for PiecewiseConstantDensity {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        self.grid.cell_of(x).map(|c| self.value(&c)).unwrap_or(0.0)
    }

    fn sup_norm(&self) -> f64 {
        self.cells.values().copied().fold(0.0, f64::max)
    }

    fn level_volume(&self, t: f64) -> f64 {
        self.cells.values().filter(|&&v| v >= t && v > 0.0).count() as f64 * self.grid.cell_volume()
    }

    fn level_mass(&self, t: f64) -> f64 {
        let vol = self.grid.cell_volume();
        self.cells.values().filter(|&&v| v >= t).map(|v| v * vol).sum()
    }

    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        Some(
            self.cells
                .iter()
                .map(|(c, &v)| {
                    let (a, b) = self.grid.cell_bounds(c);
                    v * overlap_volume(lo, hi, &a, &b)
                })
                .sum(),
        )
    }

    /// Picks a cell with probability `value · l^d`, then a uniform point in it.
    fn sample(&self, n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<&CellIndex> = self.cells.keys().collect();
        let pick = WeightedIndex::new(self.cells.values().copied()).expect("normalized density");
        let d = self.grid.dim();
        let l = self.grid.side();
        let mut out = PointSet::with_capacity(d, n).expect("positive dimension");
        let mut x = vec![0.0; d];
        for _ in 0..n {
            let (lo, _) = self.grid.cell_bounds(cells[pick.sample(&mut rng)]);
            for j in 0..d {
                // Clamp so rounding cannot leave the half-open cell.
                let v = lo[j] + l * rng.random::<f64>();
                x[j] = if v >= lo[j] + l { lo[j] } else { v };
            }
            out.push(&x).expect("finite");
        }
        out
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "family": "piecewise",
            "d": self.grid.dim(),
            "sup_norm": self.sup_norm(),
            "cells": self.cells.len(),
            "density": self.to_json_value(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergrid::SparseHistogram;

    fn two_cells(w: f64) -> PiecewiseConstantDensity {
        let g = GridSpec::new(2, 0.5).unwrap();
        PiecewiseConstantDensity::new(
            g,
            [(CellIndex(vec![0, 0]), w / 0.25), (CellIndex(vec![3, -1]), (1.0 - w) / 0.25)],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let g = GridSpec::new(1, 1.0).unwrap();
        assert!(PiecewiseConstantDensity::new(g.clone(), [(CellIndex(vec![0]), 0.9)]).is_err());
        assert!(PiecewiseConstantDensity::new(g.clone(), [(CellIndex(vec![0]), -0.5), (CellIndex(vec![1]), 1.5)]).is_err());
        assert!(PiecewiseConstantDensity::new(g.clone(), [(CellIndex(vec![0, 1]), 1.0)]).is_err());
        let d = PiecewiseConstantDensity::normalized(g, [(CellIndex(vec![0]), 3.0), (CellIndex(vec![2]), 1.0)]).unwrap();
        assert_eq!(d.value(&CellIndex(vec![0])), 0.75);
    }

    #[test]
    fn single_cell_sampling() {
        let g = GridSpec::new(2, 2.0).unwrap();
        let d = PiecewiseConstantDensity::new(g.clone(), [(CellIndex(vec![1, -2]), 0.25)]).unwrap();
        let pts = d.sample(1000, 3);
        assert!(pts.iter().all(|p| g.cell_of(p).unwrap() == CellIndex(vec![1, -2])));
    }

    #[test]
    fn weighted_fractions() {
        let d = two_cells(0.75);
        let h = SparseHistogram::ingest(d.grid().clone(), &d.sample(10_000, 5)).unwrap();
        let frac = h.count(&CellIndex(vec![0, 0])) as f64 / 1e4;
        assert!((frac - 0.75).abs() < 0.015, "{frac}");
        let d = two_cells(1.0);
        let h = SparseHistogram::ingest(d.grid().clone(), &d.sample(1000, 5)).unwrap();
        assert_eq!(h.count(&CellIndex(vec![3, -1])), 0);
    }

    #[test]
    fn exact_level_quantities() {
        let d = two_cells(0.75);
        assert_eq!(d.sup_norm(), 3.0);
        assert_eq!(d.level_volume(2.0), 0.25);
        assert_eq!(d.level_mass(2.0), 0.75);
        assert_eq!(d.level_mass(1.0), 1.0);
        assert_eq!(d.level_volume(4.0), 0.0);
        assert_eq!(d.box_mass(&[0.25, 0.0], &[10.0, 10.0]), Some(0.375));
        assert_eq!(d.pdf(&[0.1, 0.1]), 3.0);
        assert_eq!(d.pdf(&[-5.0, 0.1]), 0.0);
    }

    #[test]
    fn distinct_and_round_trip() {
        let g = GridSpec::new(2, 1.0).unwrap();
        let cells: Vec<CellIndex> = (0..4).flat_map(|i| (0..4).map(move |j| CellIndex(vec![i, j]))).collect();
        let d = PiecewiseConstantDensity::random_distinct(g, cells, 7).unwrap();
        let mut vals: Vec<f64> = d.cells().map(|(_, v)| v).collect();
        vals.sort_by(f64::total_cmp);
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
        let mut buf = Vec::new();
        d.write_json(&mut buf).unwrap();
        assert_eq!(PiecewiseConstantDensity::read_json(&buf[..]).unwrap(), d);
        assert_eq!(d.support_bounds(), (vec![0.0, 0.0], vec![4.0, 4.0]));
    }
}
