//! Empirical t-clusters on a partition and the nested piecewise-constant
//! scoring function built from them.
//!
//! On the sigma-algebra generated by a partition, the empirical excess mass
//! `H_{n,t}(Ω) = F_n(Ω) − t·Leb(Ω)` is additive over cells, so it is
//! maximized by keeping exactly the cells whose own excess is nonnegative.
//! Ties (`F_n(C) = t·Leb(C)`) are kept; empty cells never are.
//!
//! Because a cell kept at level `t` is kept at every `t' < t`, the union of
//! per-level clusters down to level `k` equals the level-`k` cluster itself,
//! and the model stores a single entry level per cell.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hypergrid::{CellIndex, Partition, SparseHistogram};
use crate::points::PointSet;

/// Decreasing positive levels `t_1 > … > t_N`, with an implicit `t_{N+1} = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ThresholdSchedule {
    levels: Vec<f64>,
    n_ref: u64,
}

#[derive(Deserialize)]
struct RawSchedule {
    levels: Vec<f64>,
    #[serde(default)]
    n_ref: u64,
}

impl TryFrom<RawSchedule> for ThresholdSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        ThresholdSchedule::new(raw.levels, raw.n_ref)
    }
}

impl ThresholdSchedule {
    pub fn new(levels: Vec<f64>, n_ref: u64) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("schedule needs at least one level"));
        }
        if levels.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("schedule levels must be positive and finite"));
        }
        if levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("schedule levels must be strictly decreasing"));
        }
        Ok(Self { levels, n_ref })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn n_ref(&self) -> u64 {
        self.n_ref
    }

    pub fn first(&self) -> f64 {
        self.levels[0]
    }

    pub fn last(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// `a_k = t_k − t_{k+1}`; they sum to `t_1`.
    pub fn weights(&self) -> Vec<f64> {
        self.levels
            .iter()
            .zip(self.levels.iter().skip(1).chain(std::iter::once(&0.0)))
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// `t_k = t_1 / (1 + 1/√n)^{k−1}` for `k = 1..=depth`.
pub fn geometric_schedule(t1: f64, n: u64, depth: usize) -> Result<ThresholdSchedule> {
    if depth == 0 {
        return Err(invalid("schedule depth must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(invalid(format!("t1 must be positive and finite, got {t1}")));
    }
    let ratio = 1.0 + 1.0 / (n as f64).sqrt();
    let levels = (0..depth).map(|k| t1 / ratio.powi(k as i32)).collect();
    ThresholdSchedule::new(levels, n)
}

/// Geometric schedule extended until the last level is `≤ t_min`.
pub fn geometric_schedule_to_floor(
    t1: f64,
    n: u64,
    t_min: f64,
    max_depth: usize,
) -> Result<ThresholdSchedule> {
    if !(t_min > 0.0) {
        return Err(invalid("t_min must be positive"));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if t_min >= t1 {
        return geometric_schedule(t1, n, 1);
    }
    let ratio = 1.0 + 1.0 / (n as f64).sqrt();
    let mut depth = 1 + ((t1 / t_min).ln() / ratio.ln()).ceil().max(0.0) as usize;
    // The logarithms can be off by one in either direction.
    while depth > 1 && t1 / ratio.powi(depth as i32 - 2) <= t_min {
        depth -= 1;
    }
    while t1 / ratio.powi(depth as i32 - 1) > t_min {
        depth += 1;
    }
    if depth > max_depth {
        return Err(invalid(format!(
            "reaching t_min = {t_min} needs {depth} levels, more than the limit {max_depth}"
        )));
    }
    geometric_schedule(t1, n, depth)
}

/// A maximizer of the empirical excess mass at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcessCluster {
    /// Cells in lexicographic index order.
    pub cells: Vec<CellIndex>,
    /// `max_Ω H_{n,t}(Ω)`.
    pub excess: f64,
}

fn cell_excess(hist: &SparseHistogram, cell: &CellIndex, t: f64) -> f64 {
    hist.mass(cell) - t * hist.volume(cell)
}

/// `H_{n,t}(Ω)` for an explicit set of cells, summed in the given order.
pub fn empirical_excess<'a>(
    hist: &SparseHistogram,
    cells: impl IntoIterator<Item = &'a CellIndex>,
    t: f64,
) -> f64 {
    cells.into_iter().map(|c| cell_excess(hist, c, t)).sum()
}

/// Empirical t-cluster: every nonempty cell with `F_n(C) ≥ t·Leb(C)`.
pub fn max_excess_cluster(hist: &SparseHistogram, t: f64) -> Result<ExcessCluster> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("level must be positive and finite, got {t}")));
    }
    if hist.n() == 0 {
        return Err(Error::NoData);
    }
    let cells = hist
        .iter()
        .filter(|(c, _)| hist.density_ratio(c) >= t)
        .map(|(c, _)| c.clone())
        .collect();
    let excess = hist.iter().map(|(c, _)| cell_excess(hist, c, t).max(0.0)).sum();
    Ok(ExcessCluster { cells, excess })
}

/// Largest density ratio over stored cells: the highest level whose
/// empirical cluster is nonempty.
pub fn choose_t1(hist: &SparseHistogram) -> Result<f64> {
    if hist.n() == 0 || hist.is_empty() {
        return Err(Error::NoData);
    }
    Ok(hist
        .iter()
        .map(|(c, _)| hist.density_ratio(c))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest density ratio over stored cells.
pub fn min_density_ratio(hist: &SparseHistogram) -> Result<f64> {
    if hist.n() == 0 || hist.is_empty() {
        return Err(Error::NoData);
    }
    Ok(hist
        .iter()
        .map(|(c, _)| hist.density_ratio(c))
        .fold(f64::INFINITY, f64::min))
}

/// Fitted scoring function `s_N(x) = Σ_k (t_k − t_{k+1}) 1{x ∈ Ω̂_{t_k}}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedClusterModel {
    partition: Partition,
    schedule: ThresholdSchedule,
    /// 0-based level at which each cell first enters the nested clusters.
    entry: BTreeMap<CellIndex, usize>,
    level_size: Vec<usize>,
    level_volume: Vec<f64>,
    level_mass: Option<Vec<f64>>,
}

/// Runs the level sweep: `Ω̃_{t_k}` is the empirical `t_k`-cluster and
/// `Ω̂_{t_k} = ∪_{i≤k} Ω̃_{t_i}`.
pub fn fit(hist: &SparseHistogram, schedule: &ThresholdSchedule) -> Result<NestedClusterModel> {
    if hist.n() == 0 {
        return Err(Error::NoData);
    }
    let mut by_ratio: Vec<(f64, &CellIndex)> =
        hist.iter().map(|(c, _)| (hist.density_ratio(c), c)).collect();
    by_ratio.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    let mut entry = BTreeMap::new();
    let mut next = 0;
    for (k, &t) in schedule.levels().iter().enumerate() {
        // Ω̃_{t_k} is the prefix of cells with ratio ≥ t_k; it contains every
        // earlier cluster because levels decrease.
        while next < by_ratio.len() && by_ratio[next].0 >= t {
            entry.insert(by_ratio[next].1.clone(), k);
            next += 1;
        }
    }
    let mut model = NestedClusterModel::from_entries(hist.partition().clone(), schedule.clone(), entry);
    let mut mass = vec![0u64; schedule.len()];
    for (cell, &k) in &model.entry {
        mass[k] += hist.count(cell);
    }
    let mut acc = 0u64;
    model.level_mass = Some(
        mass.into_iter()
            .map(|c| {
                acc += c;
                acc as f64 / hist.n() as f64
            })
            .collect(),
    );
    Ok(model)
}

impl NestedClusterModel {
    fn from_entries(
        partition: Partition,
        schedule: ThresholdSchedule,
        entry: BTreeMap<CellIndex, usize>,
    ) -> Self {
        let n = schedule.len();
        let mut size = vec![0usize; n];
        let mut vol = vec![0.0f64; n];
        for (cell, &k) in &entry {
            size[k] += 1;
            vol[k] += partition.cell_volume(cell);
        }
        let level_size: Vec<usize> = size
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let level_volume = match partition.uniform_volume() {
            Some(v) => level_size.iter().map(|&m| m as f64 * v).collect(),
            None => vol
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect(),
        };
        Self { partition, schedule, entry, level_size, level_volume, level_mass: None }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn schedule(&self) -> &ThresholdSchedule {
        &self.schedule
    }

    pub fn levels(&self) -> &[f64] {
        self.schedule.levels()
    }

    pub fn depth(&self) -> usize {
        self.schedule.len()
    }

    /// 0-based level at which `cell` enters, if ever.
    pub fn entry_level(&self, cell: &CellIndex) -> Option<usize> {
        self.entry.get(cell).copied()
    }

    /// All cells with their entry level, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&CellIndex, usize)> + '_ {
        self.entry.iter().map(|(c, &k)| (c, k))
    }

    /// Cells of `Ω̂_{t_{k+1}}` (0-based `k`), in index order.
    pub fn cluster(&self, k: usize) -> Vec<&CellIndex> {
        self.entry.iter().filter(|(_, &e)| e <= k).map(|(c, _)| c).collect()
    }

    /// Cells that first appear at 0-based level `k`.
    pub fn new_cells(&self, k: usize) -> Vec<&CellIndex> {
        self.entry.iter().filter(|(_, &e)| e == k).map(|(c, _)| c).collect()
    }

    pub fn cluster_len(&self, k: usize) -> usize {
        self.level_size[k]
    }

    pub fn cluster_volume(&self, k: usize) -> f64 {
        self.level_volume[k]
    }

    /// Training mass of each cluster; `None` for models loaded from disk.
    pub fn cluster_masses(&self) -> Option<&[f64]> {
        self.level_mass.as_deref()
    }

    /// Score of a cell: the first level at which it enters, or 0.
    pub fn score_cell(&self, cell: &CellIndex) -> f64 {
        self.entry_level(cell).map_or(0.0, |k| self.levels()[k])
    }

    /// `s_N(x)`. By telescoping of the weights this is `t_{k0}` where `k0`
    /// is the first level whose cluster contains `x`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.partition.try_locate(x)?.map_or(0.0, |c| self.score_cell(&c)))
    }

    /// `Σ_k a_k 1{x ∈ Ω̂_{t_k}}` for caller-supplied positive weights.
    pub fn score_with_weights(&self, x: &[f64], weights: &[f64]) -> Result<f64> {
        if weights.len() != self.depth() {
            return Err(invalid("one weight per level is required"));
        }
        let cell = self.partition.try_locate(x)?;
        Ok(cell
            .and_then(|c| self.entry_level(&c))
            .map_or(0.0, |k0| weights[k0..].iter().sum()))
    }

    pub fn score_all(&self, points: &PointSet) -> Result<Vec<f64>> {
        points.iter().map(|p| self.score(p)).collect()
    }

    /// 0-based entry level per point (`None` outside every cluster).
    pub fn entry_levels(&self, points: &PointSet) -> Result<Vec<Option<usize>>> {
        points
            .iter()
            .map(|p| Ok(self.partition.try_locate(p)?.and_then(|c| self.entry_level(&c))))
            .collect()
    }

    /// Point indices ordered from most to least abnormal (ascending score,
    /// ties in input order).
    pub fn rank(&self, points: &PointSet) -> Result<Vec<usize>> {
        Ok(rank_by_scores(&self.score_all(points)?))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let clusters = (0..self.depth())
            .map(|k| self.new_cells(k).into_iter().cloned().collect())
            .collect();
        serde_json::to_value(ModelFile {
            spec: self.partition.clone(),
            schedule: self.schedule.clone(),
            clusters,
            level_mass: self.level_mass.clone(),
        })
        .expect("model serializes")
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.to_json_value())?;
        Ok(())
    }

    pub fn write_json_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        if file.clusters.len() != file.schedule.len() {
            return Err(invalid(format!(
                "model has {} levels but {} cluster increments",
                file.schedule.len(),
                file.clusters.len()
            )));
        }
        let dim = file.spec.dim();
        let mut entry = BTreeMap::new();
        for (k, cells) in file.clusters.into_iter().enumerate() {
            for cell in cells {
                let ok = match &file.spec {
                    Partition::Grid(_) => cell.0.len() == dim,
                    Partition::Boxes(b) => {
                        cell.0.len() == 1 && cell.0[0] >= 0 && (cell.0[0] as usize) < b.boxes().len()
                    }
                };
                if !ok {
                    return Err(invalid(format!("cell index {:?} does not fit the partition", cell.0)));
                }
                if entry.insert(cell, k).is_some() {
                    return Err(invalid("a cell appears in more than one cluster increment"));
                }
            }
        }
        let mut model = Self::from_entries(file.spec, file.schedule, entry);
        if let Some(m) = file.level_mass {
            if m.len() != model.depth() {
                return Err(invalid("level_mass length does not match the schedule"));
            }
            model.level_mass = Some(m);
        }
        Ok(model)
    }

    pub fn read_json_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Stable ascending order of `scores`.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    spec: Partition,
    schedule: ThresholdSchedule,
    /// Cells added at each level (`Ω̂_{t_k} \ Ω̂_{t_{k−1}}`).
    clusters: Vec<Vec<CellIndex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level_mass: Option<Vec<f64>>,
}
