//! Model bias of a hypercube partition: the cell-averaged density `f_F`,
//! the best excess mass achievable inside the partition class, and
//! `‖f − f_F‖_{L1}`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::empirical::UniformBox;
use crate::curves::oracle::DensityOracle;
use crate::curves::quadrature::TensorGauss;
use crate::error::{invalid, Result};
use crate::hypergrid::{CellIndex, GridSpec};

/// Per-cell means `(1/Leb(C)) ∫_C f` over the cells meeting a region.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedDensity {
    grid: GridSpec,
    means: BTreeMap<CellIndex, f64>,
}

impl ProjectedDensity {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Mean of `f` over `cell`; 0 outside the projected region.
    pub fn mean(&self, cell: &CellIndex) -> f64 {
        self.means.get(cell).copied().unwrap_or(0.0)
    }

    pub fn mass(&self, cell: &CellIndex) -> f64 {
        self.mean(cell) * self.grid.cell_volume()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellIndex, f64)> + '_ {
        self.means.iter().map(|(c, &m)| (c, m))
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.means.values().map(|m| m * self.grid.cell_volume()).sum()
    }

    /// `f_F(x)`.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.mean(&self.grid.cell_of(x)?))
    }
}

fn cell_means<O: DensityOracle + ?Sized>(
    oracle: &O,
    grid: &GridSpec,
    cells: Vec<CellIndex>,
    quad: &TensorGauss,
) -> BTreeMap<CellIndex, f64> {
    let vol = grid.cell_volume();
    cells
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = grid.cell_bounds(&c);
            let m = oracle.mass_in(&lo, &hi, quad) / vol;
            (c, m)
        })
        .collect()
}

/// Projects `f` onto the grid cells meeting `region`. Cell masses use the
/// oracle's closed form when it has one, tensor quadrature otherwise.
pub fn project_density<O: DensityOracle + ?Sized>(
    oracle: &O,
    grid: &GridSpec,
    region: &UniformBox,
    quad: &TensorGauss,
) -> Result<ProjectedDensity> {
    if oracle.dim() != grid.dim() {
        return Err(invalid("oracle and grid dimensions differ"));
    }
    let cells = grid.cells_in_box(region.lo(), region.hi())?;
    Ok(ProjectedDensity { grid: grid.clone(), means: cell_means(oracle, grid, cells, quad) })
}

/// `EM*_F(t) = Σ_C max(∫_C f − t·Leb(C), 0)`.
pub fn em_star_class(projected: &ProjectedDensity, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("level must be positive, got {t}")));
    }
    let vol = projected.grid.cell_volume();
    Ok(projected
        .means
        .values()
        .map(|m| (m * vol - t * vol).max(0.0))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BiasMethod {
    /// Composite tensor Gauss rule: `order` points per axis on each of
    /// `subdivisions` pieces per cell axis. The reported tolerance is the
    /// change when the subdivision is halved.
    Quadrature { order: usize, subdivisions: usize },
    /// Uniform draws over the region.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Estimate of `∫_region |f − f_F|` plus the mass left outside the region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub value: f64,
    pub tail_mass: f64,
    /// `value + 2·tail_mass`: outside the region `|f − f_F| ≤ f + f_F`.
    pub bound: f64,
    pub method: BiasMethod,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `‖f − f_F‖_{L1}` over the cells meeting `region`.
pub fn bias_l1<O: DensityOracle + ?Sized>(
    oracle: &O,
    grid: &GridSpec,
    region: &UniformBox,
    method: BiasMethod,
) -> Result<BiasReport> {
    if oracle.dim() != grid.dim() {
        return Err(invalid("oracle and grid dimensions differ"));
    }
    let cells = grid.cells_in_box(region.lo(), region.hi())?;
    let vol = grid.cell_volume();
    let (value, tolerance, seed, means) = match method {
        BiasMethod::Quadrature { order, subdivisions } => {
            if order == 0 || subdivisions == 0 {
                return Err(invalid("quadrature order and subdivisions must be positive"));
            }
            let fine = TensorGauss::new(order, 2 * subdivisions);
            let coarse = TensorGauss::new(order, subdivisions);
            let means = cell_means(oracle, grid, cells.clone(), &fine);
            let (v_fine, v_coarse) = cells
                .par_iter()
                .map(|c| {
                    let (lo, hi) = grid.cell_bounds(c);
                    let m = means[c];
                    let f = |x: &[f64]| (oracle.pdf(x) - m).abs();
                    (fine.integrate(&lo, &hi, f), coarse.integrate(&lo, &hi, f))
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            (v_fine, (v_fine - v_coarse).abs(), None, means)
        }
        BiasMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(invalid("Monte-Carlo bias needs at least two draws"));
            }
            let means = cell_means(oracle, grid, cells.clone(), &TensorGauss::new(8, 1));
            let (lo, hi) = grid.cell_bounds(&cells[0]);
            let (lo_last, hi_last) = grid.cell_bounds(&cells[cells.len() - 1]);
            let covered = UniformBox::new(
                lo.iter().zip(&lo_last).map(|(a, b)| a.min(*b)).collect(),
                hi.iter().zip(&hi_last).map(|(a, b)| a.max(*b)).collect(),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = grid.dim();
            let mut x = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..samples {
                for ((xj, lo), hi) in x.iter_mut().zip(covered.lo()).zip(covered.hi()) {
                    *xj = lo + (hi - lo) * rng.random::<f64>();
                }
                let cell = grid.cell_of(&x)?;
                let g = (oracle.pdf(&x) - means.get(&cell).copied().unwrap_or(0.0)).abs();
                s += g;
                s2 += g * g;
            }
            let m = samples as f64;
            let mean = s / m;
            let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
            let v = covered.volume();
            (v * mean, v * (var / m).sqrt(), Some(seed), means)
        }
    };
    let region_mass: f64 = means.values().map(|m| m * vol).sum();
    let tail_mass = (1.0 - region_mass).max(0.0);
    Ok(BiasReport {
        value,
        tail_mass,
        bound: value + 2.0 * tail_mass,
        method,
        tolerance,
        seed,
    })
}
