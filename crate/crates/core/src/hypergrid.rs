//! Sparse partitions of ℝ^d and per-cell empirical counts.
//!
//! The main partition is the regular lattice of half-open hypercubes of side
//! `l` anchored at `origin`. A finite list of disjoint boxes is also
//! supported; it generates the same kind of sigma-algebra (unions of cells)
//! but allows cells of unequal volume.
//!
//! Cells are only materialized when a point lands in them. Absent cells have
//! zero empirical mass.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::points::PointSet;

/// Integer address of a cell. For grids it is the lattice coordinate vector;
/// for box partitions it is `[box_number]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellIndex(pub Vec<i64>);

impl CellIndex {
    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for CellIndex {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

#[derive(Deserialize)]
struct RawGridSpec {
    d: usize,
    l: f64,
    #[serde(default)]
    origin: Option<Vec<f64>>,
}

/// Regular lattice of half-open hypercubes
/// `∏_j [origin_j + l·i_j, origin_j + l·(i_j + 1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    d: usize,
    l: f64,
    origin: Vec<f64>,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGridSpec) -> Result<Self> {
        match raw.origin {
            Some(origin) => GridSpec::with_origin(raw.l, origin),
            None => GridSpec::new(raw.d, raw.l),
        }
        .and_then(|spec| {
            if spec.d == raw.d {
                Ok(spec)
            } else {
                Err(invalid("origin length does not match d"))
            }
        })
    }
}

impl GridSpec {
    /// Grid anchored at the origin.
    pub fn new(d: usize, l: f64) -> Result<Self> {
        Self::with_origin(l, vec![0.0; d])
    }

    pub fn with_origin(l: f64, origin: Vec<f64>) -> Result<Self> {
        if origin.is_empty() {
            return Err(invalid("grid dimension must be at least 1"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(invalid(format!("grid side must be positive and finite, got {l}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("grid origin must be finite"));
        }
        Ok(Self { d: origin.len(), l, origin })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> f64 {
        self.l
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Lebesgue measure of every cell, `l^d`.
    pub fn cell_volume(&self) -> f64 {
        self.l.powi(self.d as i32)
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Result<CellIndex> {
        if x.len() != self.d {
            return Err(invalid(format!(
                "point has {} coordinates, grid has dimension {}",
                x.len(),
                self.d
            )));
        }
        let mut idx = Vec::with_capacity(self.d);
        for (j, (&xj, &oj)) in x.iter().zip(&self.origin).enumerate() {
            if !xj.is_finite() {
                return Err(invalid(format!("coordinate {j} is not finite ({xj})")));
            }
            let k = ((xj - oj) / self.l).floor();
            // i64 range guard; 2^62 keeps `k + 1` representable too.
            if k.abs() >= 4.611_686_018_427_388e18 {
                return Err(invalid(format!("coordinate {j} lies outside the addressable grid")));
            }
            idx.push(k as i64);
        }
        Ok(CellIndex(idx))
    }

    /// Lower and upper corners of a cell.
    pub fn cell_bounds(&self, cell: &CellIndex) -> (Vec<f64>, Vec<f64>) {
        let lo: Vec<f64> = cell
            .0
            .iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + self.l * i as f64)
            .collect();
        let hi = cell
            .0
            .iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + self.l * (i + 1) as f64)
            .collect();
        (lo, hi)
    }

    /// All cells meeting the box `[lo, hi)` with positive volume.
    pub fn cells_in_box(&self, lo: &[f64], hi: &[f64]) -> Result<Vec<CellIndex>> {
        if lo.len() != self.d || hi.len() != self.d {
            return Err(invalid("region dimension does not match grid"));
        }
        let mut ranges = Vec::with_capacity(self.d);
        for j in 0..self.d {
            if !(lo[j] < hi[j]) || !lo[j].is_finite() || !hi[j].is_finite() {
                return Err(invalid("region must be a finite nondegenerate box"));
            }
            let first = ((lo[j] - self.origin[j]) / self.l).floor() as i64;
            let mut last = ((hi[j] - self.origin[j]) / self.l).ceil() as i64 - 1;
            last = last.max(first);
            ranges.push(first..=last);
        }
        let mut out = vec![Vec::with_capacity(self.d)];
        for r in ranges {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    r.clone().map(move |i| {
                        let mut p = prefix.clone();
                        p.push(i);
                        p
                    })
                })
                .collect();
        }
        Ok(out.into_iter().map(CellIndex).collect())
    }
}

/// A half-open axis-aligned box `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(invalid("box corners must have equal nonzero dimension"));
        }
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(invalid("box must be finite with lo < hi on every axis"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| a <= v && v < b)
    }

    fn overlaps(&self, other: &AxisBox) -> bool {
        (0..self.dim()).all(|j| self.lo[j] < other.hi[j] && other.lo[j] < self.hi[j])
    }
}

#[derive(Deserialize)]
struct RawBoxPartition {
    boxes: Vec<AxisBox>,
}

/// A finite family of pairwise disjoint boxes. Points outside every box are
/// rejected at ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoxPartition")]
pub struct BoxPartition {
    boxes: Vec<AxisBox>,
}

impl TryFrom<RawBoxPartition> for BoxPartition {
    type Error = Error;

    fn try_from(raw: RawBoxPartition) -> Result<Self> {
        BoxPartition::new(raw.boxes)
    }
}

impl BoxPartition {
    pub fn new(boxes: Vec<AxisBox>) -> Result<Self> {
        let first = boxes.first().ok_or_else(|| invalid("box partition is empty"))?;
        let d = first.dim();
        for b in &boxes {
            b.validate()?;
            if b.dim() != d {
                return Err(invalid("boxes have mixed dimensions"));
            }
        }
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                if a.overlaps(b) {
                    return Err(invalid("boxes must be pairwise disjoint"));
                }
            }
        }
        Ok(Self { boxes })
    }

    pub fn boxes(&self) -> &[AxisBox] {
        &self.boxes
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }
}

/// The cell family a histogram is built on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Partition {
    Grid(GridSpec),
    Boxes(BoxPartition),
}

impl From<GridSpec> for Partition {
    fn from(g: GridSpec) -> Self {
        Partition::Grid(g)
    }
}

impl From<BoxPartition> for Partition {
    fn from(b: BoxPartition) -> Self {
        Partition::Boxes(b)
    }
}

impl Partition {
    pub fn dim(&self) -> usize {
        match self {
            Partition::Grid(g) => g.dim(),
            Partition::Boxes(b) => b.dim(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridSpec> {
        match self {
            Partition::Grid(g) => Some(g),
            Partition::Boxes(_) => None,
        }
    }

    /// Cell containing `x`. Box partitions fail for uncovered points.
    pub fn locate(&self, x: &[f64]) -> Result<CellIndex> {
        match self {
            Partition::Grid(g) => g.cell_of(x),
            Partition::Boxes(b) => {
                if x.len() != b.dim() {
                    return Err(invalid("point dimension does not match partition"));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("point has a non-finite coordinate"));
                }
                b.boxes
                    .iter()
                    .position(|bx| bx.contains(x))
                    .map(|i| CellIndex(vec![i as i64]))
                    .ok_or_else(|| invalid(format!("point {x:?} is not covered by any box")))
            }
        }
    }

    /// Like [`Partition::locate`] but maps uncovered points to `None`
    /// instead of failing. Non-finite input is still an error.
    pub fn try_locate(&self, x: &[f64]) -> Result<Option<CellIndex>> {
        match self {
            Partition::Grid(g) => g.cell_of(x).map(Some),
            Partition::Boxes(b) => {
                if x.len() != b.dim() || x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("point must be finite with matching dimension"));
                }
                Ok(b
                    .boxes
                    .iter()
                    .position(|bx| bx.contains(x))
                    .map(|i| CellIndex(vec![i as i64])))
            }
        }
    }

    pub fn cell_volume(&self, cell: &CellIndex) -> f64 {
        match self {
            Partition::Grid(g) => g.cell_volume(),
            Partition::Boxes(b) => b.boxes[cell.0[0] as usize].volume(),
        }
    }

    /// `Some(v)` when every cell has the same volume `v`.
    pub fn uniform_volume(&self) -> Option<f64> {
        match self {
            Partition::Grid(g) => Some(g.cell_volume()),
            Partition::Boxes(b) => {
                let v = b.boxes[0].volume();
                b.boxes.iter().all(|bx| bx.volume() == v).then_some(v)
            }
        }
    }

    pub fn cell_bounds(&self, cell: &CellIndex) -> (Vec<f64>, Vec<f64>) {
        match self {
            Partition::Grid(g) => g.cell_bounds(cell),
            Partition::Boxes(b) => {
                let bx = &b.boxes[cell.0[0] as usize];
                (bx.lo.clone(), bx.hi.clone())
            }
        }
    }
}

/// Per-cell point counts over a partition. Only nonempty cells are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHistogram {
    partition: Partition,
    counts: BTreeMap<CellIndex, u64>,
    n: u64,
}

impl SparseHistogram {
    pub fn empty(partition: impl Into<Partition>) -> Self {
        Self { partition: partition.into(), counts: BTreeMap::new(), n: 0 }
    }

    /// Counts the points falling in each cell.
    pub fn ingest(partition: impl Into<Partition>, points: &PointSet) -> Result<Self> {
        let mut hist = Self::empty(partition);
        if points.dim() != hist.partition.dim() {
            return Err(invalid(format!(
                "points have dimension {}, partition has {}",
                points.dim(),
                hist.partition.dim()
            )));
        }
        for p in points.iter() {
            hist.insert(p)?;
        }
        Ok(hist)
    }

    /// Ingests in `shards` contiguous chunks in parallel and merges.
    pub fn ingest_sharded(
        partition: impl Into<Partition>,
        points: &PointSet,
        shards: usize,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let partition = partition.into();
        if points.dim() != partition.dim() {
            return Err(invalid("points dimension does not match partition"));
        }
        let shards = shards.max(1);
        let chunk = points.len().div_ceil(shards).max(1) * points.dim();
        points
            .as_flat()
            .par_chunks(chunk)
            .map(|c| {
                let part = PointSet::from_flat(points.dim(), c.to_vec())?;
                Self::ingest(partition.clone(), &part)
            })
            .try_reduce(|| Self::empty(partition.clone()), |a, b| a.merge(b))
    }

    pub fn insert(&mut self, x: &[f64]) -> Result<()> {
        let cell = self.partition.locate(x)?;
        *self.counts.entry(cell).or_insert(0) += 1;
        self.n += 1;
        Ok(())
    }

    /// Sums counts of two histograms on the same partition.
    pub fn merge(mut self, other: Self) -> Result<Self> {
        if self.partition != other.partition {
            return Err(invalid("cannot merge histograms over different partitions"));
        }
        for (cell, c) in other.counts {
            *self.counts.entry(cell).or_insert(0) += c;
        }
        self.n += other.n;
        Ok(self)
    }

    /// Builds a histogram from explicit counts. Zero counts are dropped.
    pub fn from_counts(
        partition: impl Into<Partition>,
        counts: impl IntoIterator<Item = (CellIndex, u64)>,
    ) -> Result<Self> {
        let partition = partition.into();
        let mut map = BTreeMap::new();
        let mut n = 0u64;
        for (cell, c) in counts {
            if cell.0.len() != partition.dim() && partition.as_grid().is_some() {
                return Err(invalid("cell index has wrong dimension"));
            }
            if let Partition::Boxes(b) = &partition {
                if cell.0.len() != 1 || cell.0[0] < 0 || cell.0[0] as usize >= b.boxes.len() {
                    return Err(invalid(format!("no box with index {:?}", cell.0)));
                }
            }
            if c == 0 {
                continue;
            }
            if map.insert(cell, c).is_some() {
                return Err(invalid("duplicate cell index"));
            }
            n += c;
        }
        Ok(Self { partition, counts: map, n })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of nonempty cells.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, cell: &CellIndex) -> u64 {
        self.counts.get(cell).copied().unwrap_or(0)
    }

    /// Nonempty cells in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = (&CellIndex, u64)> + '_ {
        self.counts.iter().map(|(c, &k)| (c, k))
    }

    pub fn volume(&self, cell: &CellIndex) -> f64 {
        self.partition.cell_volume(cell)
    }

    /// Empirical mass `F_n(C) = count / n`.
    pub fn mass(&self, cell: &CellIndex) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.count(cell) as f64 / self.n as f64
    }

    /// `F_n(C) / Leb(C)`, the empirical analogue of the cell-averaged density.
    pub fn density_ratio(&self, cell: &CellIndex) -> f64 {
        let c = self.count(cell);
        if c == 0 || self.n == 0 {
            return 0.0;
        }
        c as f64 / (self.n as f64 * self.volume(cell))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(HistogramFile {
            spec: self.partition.clone(),
            n: self.n,
            cells: self
                .counts
                .iter()
                .map(|(index, &count)| CellCount { index: index.clone(), count })
                .collect(),
        })
        .expect("histogram serializes")
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_json_value())?;
        Ok(())
    }

    pub fn write_json_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_json(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: HistogramFile = serde_json::from_reader(reader)?;
        let hist = Self::from_counts(
            file.spec,
            file.cells.into_iter().map(|c| (c.index, c.count)),
        )?;
        if hist.n != file.n {
            return Err(invalid(format!(
                "cell counts sum to {} but n = {}",
                hist.n, file.n
            )));
        }
        Ok(hist)
    }
}

#[derive(Serialize, Deserialize)]
struct CellCount {
    index: CellIndex,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct HistogramFile {
    spec: Partition,
    n: u64,
    cells: Vec<CellCount>,
}
