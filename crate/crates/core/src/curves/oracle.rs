use crate::curves::empirical::LevelSets;
use crate::curves::quadrature::TensorGauss;
use crate::curves::{check_monotone, Axis, CurveSamples};
use crate::em_fit::NestedClusterModel;
use crate::error::{invalid, Result};
use crate::points::PointSet;

/// Analytic access to a density `f` for synthetic ground truth.
pub trait DensityOracle: Sync {
    fn dim(&self) -> usize;

    fn pdf(&self, x: &[f64]) -> f64;

    /// `‖f‖_∞`.
    fn sup_norm(&self) -> f64;

    /// `λ(t) = Leb({f ≥ t})`.
    fn level_volume(&self, t: f64) -> f64;

    /// `α(t) = P(f(X) ≥ t)`.
    fn level_mass(&self, t: f64) -> f64;

    /// `P(X ∈ [lo, hi))` when it has a closed form.
    fn box_mass(&self, _lo: &[f64], _hi: &[f64]) -> Option<f64> {
        None
    }

    fn sample(&self, n: usize, seed: u64) -> PointSet;

    /// Parameters worth recording next to generated data.
    fn metadata(&self) -> serde_json::Value;

    /// `P(X ∈ [lo, hi))`, by closed form or tensor quadrature.
    fn mass_in(&self, lo: &[f64], hi: &[f64], quad: &TensorGauss) -> f64 {
        self.box_mass(lo, hi)
            .unwrap_or_else(|| quad.integrate(lo, hi, |x| self.pdf(x)))
    }
}

/// `EM*(t) = α(t) − t·λ(t)`, zero from `‖f‖_∞` on.
pub fn oracle_em_star<O: DensityOracle + ?Sized>(oracle: &O, t: f64) -> Result<f64> {
    if !(t > 0.0) || t.is_nan() {
        return Err(invalid(format!("level must be positive, got {t}")));
    }
    if t >= oracle.sup_norm() {
        return Ok(0.0);
    }
    Ok((oracle.level_mass(t) - t * oracle.level_volume(t)).max(0.0))
}

/// True mass and exact volume of each nested cluster of `model` under `oracle`.
pub fn model_level_sets_under<O: DensityOracle + ?Sized>(
    model: &NestedClusterModel,
    oracle: &O,
    quad: &TensorGauss,
) -> Result<LevelSets> {
    if oracle.dim() != model.partition().dim() {
        return Err(invalid("oracle and model dimensions differ"));
    }
    let mut inc = vec![0.0; model.depth()];
    for (cell, k) in model.entries() {
        let (lo, hi) = model.partition().cell_bounds(cell);
        inc[k] += oracle.mass_in(&lo, &hi, quad);
    }
    let mut acc = 0.0;
    let mass = inc
        .into_iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    let volume = (0..model.depth()).map(|k| model.cluster_volume(k)).collect();
    LevelSets::new(mass, volume)
}

/// `EM_s(t) = max_k P(Ω̂_k) − t·Leb(Ω̂_k)` (and 0 for the empty set), with
/// the true distribution in place of the empirical one.
pub fn model_em_curve_under<O: DensityOracle + ?Sized>(
    model: &NestedClusterModel,
    oracle: &O,
    t_grid: &[f64],
    quad: &TensorGauss,
) -> Result<CurveSamples> {
    check_monotone(t_grid.iter().copied())?;
    let sets = model_level_sets_under(model, oracle, quad)?;
    CurveSamples::new(Axis::Threshold, t_grid.iter().map(|&t| (t, sets.em(t))).collect())
}
