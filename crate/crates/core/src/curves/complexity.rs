//! Empirical Rademacher average over a partition sigma-algebra and the
//! resulting uniform deviation penalty.
//!
//! For a union of cells `Ω`, `Σ_{i: X_i ∈ Ω} ε_i = Σ_{C ⊆ Ω} S_C` where `S_C`
//! is the signed sum inside cell `C`. The supremum of its absolute value is
//! therefore `max(Σ_C S_C⁺, Σ_C S_C⁻)`.
//!
//! Round `r` draws its signs from a ChaCha8 stream seeded with `seed + r`,
//! so rounds can run in any order or in parallel with identical results.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::hypergrid::{CellIndex, Partition};
use crate::points::PointSet;

/// Dense cell ids for a sample: `assignment[i]` is the cell of point `i`.
pub fn cell_assignment(partition: &Partition, points: &PointSet) -> Result<Vec<usize>> {
    let mut ids: BTreeMap<CellIndex, usize> = BTreeMap::new();
    points
        .iter()
        .map(|p| {
            let cell = partition.locate(p)?;
            let next = ids.len();
            Ok(*ids.entry(cell).or_insert(next))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RademacherEstimate {
    pub mean: f64,
    /// Standard error of the Monte-Carlo mean over rounds.
    pub std_error: f64,
    pub rounds: usize,
}

fn one_round(assignment: &[usize], cells: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0i64; cells];
    for &c in assignment {
        sums[c] += if rng.random::<bool>() { 1 } else { -1 };
    }
    let pos: i64 = sums.iter().filter(|&&s| s > 0).sum();
    let neg: i64 = -sums.iter().filter(|&&s| s < 0).sum::<i64>();
    pos.max(neg) as f64 / assignment.len() as f64
}

/// Monte-Carlo estimate of `E_ε sup_Ω (1/n)|Σ_i ε_i 1{X_i ∈ Ω}|`.
pub fn empirical_rademacher(assignment: &[usize], rounds: usize, seed: u64) -> Result<RademacherEstimate> {
    if assignment.is_empty() {
        return Err(invalid("Rademacher average needs at least one point"));
    }
    if rounds == 0 {
        return Err(invalid("Rademacher average needs at least one round"));
    }
    let cells = assignment.iter().max().map_or(0, |m| m + 1);
    let values: Vec<f64> = (0..rounds)
        .into_par_iter()
        .map(|r| one_round(assignment, cells, seed.wrapping_add(r as u64)))
        .collect();
    let m = rounds as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if rounds > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate { mean, std_error: (var / m).sqrt(), rounds })
}

/// `Φ_n(δ) = 2 R_n + √(log(1/δ) / (2n))`.
pub fn penalty(rademacher: f64, n: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !(rademacher >= 0.0) {
        return Err(invalid("Rademacher average must be nonnegative"));
    }
    Ok(2.0 * rademacher + ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}
