use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curves::{check_monotone, Axis, CurveSamples};
use crate::em_fit::NestedClusterModel;
use crate::error::{invalid, Error, Result};
use crate::points::PointSet;

/// A nested family of level sets given by their masses and volumes, from
/// the smallest set to the largest.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSets {
    mass: Vec<f64>,
    volume: Vec<f64>,
}

impl LevelSets {
    pub fn new(mass: Vec<f64>, volume: Vec<f64>) -> Result<Self> {
        if mass.len() != volume.len() {
            return Err(invalid("mass and volume sequences differ in length"));
        }
        Ok(Self { mass, volume })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    /// `max(0, max_k mass_k − t·volume_k)`; the empty set contributes 0.
    pub fn em(&self, t: f64) -> f64 {
        self.mass
            .iter()
            .zip(&self.volume)
            .map(|(m, v)| m - t * v)
            .fold(0.0, f64::max)
    }

    /// Volume of the smallest set holding mass at least `alpha`, or `+∞`
    /// when no set in the family does.
    pub fn mv(&self, alpha: f64) -> f64 {
        self.mass
            .iter()
            .position(|&m| m >= alpha)
            .map_or(f64::INFINITY, |k| self.volume[k])
    }
}

/// Empirical masses on `eval` and exact volumes of the model's clusters.
fn model_level_sets(model: &NestedClusterModel, eval: &PointSet) -> Result<LevelSets> {
    if eval.is_empty() {
        return Err(Error::NoData);
    }
    let mut per_level = vec![0u64; model.depth()];
    for k in model.entry_levels(eval)?.into_iter().flatten() {
        per_level[k] += 1;
    }
    let n = eval.len() as f64;
    let mut acc = 0u64;
    let mut mass = Vec::with_capacity(model.depth());
    let mut volume = Vec::with_capacity(model.depth());
    for (k, c) in per_level.into_iter().enumerate() {
        acc += c;
        // Levels that add no cell repeat the previous set.
        if k > 0 && model.cluster_len(k) == model.cluster_len(k - 1) {
            continue;
        }
        if model.cluster_len(k) == 0 {
            continue;
        }
        mass.push(acc as f64 / n);
        volume.push(model.cluster_volume(k));
    }
    LevelSets::new(mass, volume)
}

/// `ÊM_s(t) = max_k α̂(Ω̂_k) − t·Leb(Ω̂_k)` with masses measured on `eval`.
pub fn empirical_em_curve(
    model: &NestedClusterModel,
    eval: &PointSet,
    t_grid: &[f64],
) -> Result<CurveSamples> {
    check_monotone(t_grid.iter().copied())?;
    if t_grid.iter().any(|&t| t < 0.0) {
        return Err(invalid("EM levels must be nonnegative"));
    }
    let sets = model_level_sets(model, eval)?;
    CurveSamples::new(Axis::Threshold, t_grid.iter().map(|&t| (t, sets.em(t))).collect())
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    check_monotone(alphas.iter().copied())?;
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(invalid(format!("mass level {a} is outside (0, 1]")));
    }
    Ok(())
}

/// `MV_s(α)`: volume of the smallest model level set whose empirical mass on
/// `eval` reaches `α`. Infinite when even the largest cluster falls short.
pub fn empirical_mv_curve(
    model: &NestedClusterModel,
    eval: &PointSet,
    alphas: &[f64],
) -> Result<CurveSamples> {
    check_alphas(alphas)?;
    let sets = model_level_sets(model, eval)?;
    CurveSamples::new(Axis::Mass, alphas.iter().map(|&a| (a, sets.mv(a))).collect())
}

/// Axis-aligned box used as the sampling domain for Monte-Carlo volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl UniformBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid("box corners must have equal nonzero dimension"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(invalid("box is degenerate or unbounded"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// `m` uniform draws, deterministic in `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut flat = Vec::with_capacity(m * d);
        for _ in 0..m {
            for j in 0..d {
                flat.push(self.lo[j] + (self.hi[j] - self.lo[j]) * rng.random::<f64>());
            }
        }
        PointSet::from_flat(d, flat).expect("dimension is positive")
    }
}

/// `vol(box) · #{draws with s ≥ u} / m`.
pub fn mc_volume<S>(score: S, u: f64, domain: &UniformBox, m: usize, seed: u64) -> Result<f64>
where
    S: Fn(&[f64]) -> f64,
{
    if m == 0 {
        return Err(invalid("Monte-Carlo volume needs at least one draw"));
    }
    let draws = domain.sample(m, seed);
    let hits = draws.iter().filter(|x| score(x) >= u).count();
    Ok(domain.volume() * hits as f64 / m as f64)
}

/// Level sets `{s ≥ u}` for `u` ranging over the distinct positive scores of
/// `eval`, with Monte-Carlo volumes from one shared set of draws.
fn scored_level_sets<S>(
    score: &S,
    eval: &PointSet,
    domain: &UniformBox,
    m: usize,
    seed: u64,
) -> Result<LevelSets>
where
    S: Fn(&[f64]) -> f64,
{
    if eval.is_empty() {
        return Err(Error::NoData);
    }
    if m == 0 {
        return Err(invalid("Monte-Carlo volume needs at least one draw"));
    }
    let mut eval_scores: Vec<f64> = eval.iter().map(score).collect();
    eval_scores.sort_by(|a, b| b.total_cmp(a));
    let mut mc_scores: Vec<f64> = domain.sample(m, seed).iter().map(score).collect();
    mc_scores.sort_by(|a, b| b.total_cmp(a));

    let n = eval_scores.len() as f64;
    let mut mass = Vec::new();
    let mut volume = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < eval_scores.len() {
        let u = eval_scores[i];
        if !(u > 0.0) {
            break;
        }
        while i < eval_scores.len() && eval_scores[i] >= u {
            i += 1;
        }
        while j < mc_scores.len() && mc_scores[j] >= u {
            j += 1;
        }
        mass.push(i as f64 / n);
        volume.push(domain.volume() * j as f64 / m as f64);
    }
    LevelSets::new(mass, volume)
}

/// Empirical EM curve of an arbitrary scoring function, with level-set
/// volumes estimated by Monte Carlo over `domain`.
pub fn em_curve_of_scores<S>(
    score: S,
    eval: &PointSet,
    t_grid: &[f64],
    domain: &UniformBox,
    m: usize,
    seed: u64,
) -> Result<CurveSamples>
where
    S: Fn(&[f64]) -> f64,
{
    check_monotone(t_grid.iter().copied())?;
    let sets = scored_level_sets(&score, eval, domain, m, seed)?;
    CurveSamples::new(Axis::Threshold, t_grid.iter().map(|&t| (t, sets.em(t))).collect())
}

/// Empirical MV curve of an arbitrary scoring function, with Monte-Carlo
/// volumes over `domain`.
pub fn mv_curve_of_scores<S>(
    score: S,
    eval: &PointSet,
    alphas: &[f64],
    domain: &UniformBox,
    m: usize,
    seed: u64,
) -> Result<CurveSamples>
where
    S: Fn(&[f64]) -> f64,
{
    check_alphas(alphas)?;
    let sets = scored_level_sets(&score, eval, domain, m, seed)?;
    CurveSamples::new(Axis::Mass, alphas.iter().map(|&a| (a, sets.mv(a))).collect())
}
