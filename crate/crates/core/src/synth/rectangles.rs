use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::curves::DensityOracle;
use crate::error::{invalid, Result};
use crate::hypergrid::{AxisBox, BoxPartition, CellIndex, Partition, SparseHistogram};
use crate::points::PointSet;
use crate::synth::overlap_volume;

/// Uniform mixture over disjoint boxes: density `w_i / Leb(B_i)` on box `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RectangleMixture {
    boxes: BoxPartition,
    weights: Vec<f64>,
}

impl RectangleMixture {
    pub fn new(boxes: BoxPartition, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != boxes.boxes().len() {
            return Err(invalid("one weight per box is required"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { boxes, weights })
    }

    /// Weights proportional to the given point counts.
    pub fn from_counts(boxes: BoxPartition, counts: &[u64]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(invalid("counts must not all be zero"));
        }
        Self::new(boxes, counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    pub fn boxes(&self) -> &BoxPartition {
        &self.boxes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn heights(&self) -> impl Iterator<Item = (&AxisBox, f64)> + '_ {
        self.boxes.boxes().iter().zip(&self.weights).map(|(b, w)| (b, w / b.volume()))
    }
}

impl DensityOracle for RectangleMixture {
    fn dim(&self) -> usize {
        self.boxes.dim()
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        self.heights().find(|(b, _)| b.contains(x)).map_or(0.0, |(_, h)| h)
    }

    fn sup_norm(&self) -> f64 {
        self.heights().map(|(_, h)| h).fold(0.0, f64::max)
    }

    fn level_volume(&self, t: f64) -> f64 {
        self.heights().filter(|&(_, h)| h >= t && h > 0.0).map(|(b, _)| b.volume()).sum()
    }

    fn level_mass(&self, t: f64) -> f64 {
        self.heights().filter(|&(_, h)| h >= t).map(|(b, h)| h * b.volume()).sum()
    }

    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        Some(self.heights().map(|(b, h)| h * overlap_volume(lo, hi, &b.lo, &b.hi)).sum())
    }

    fn sample(&self, n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(&self.weights).expect("normalized weights");
        let d = self.dim();
        let mut out = PointSet::with_capacity(d, n).expect("positive dimension");
        let mut x = vec![0.0; d];
        for _ in 0..n {
            let b = &self.boxes.boxes()[pick.sample(&mut rng)];
            for ((xj, &lo), &hi) in x.iter_mut().zip(&b.lo).zip(&b.hi) {
                let v = lo + (hi - lo) * rng.random::<f64>();
                *xj = if v >= hi { lo } else { v };
            }
            out.push(&x).expect("finite");
        }
        out
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "family": "rectangles",
            "d": self.dim(),
            "boxes": self.boxes,
            "weights": self.weights,
        })
    }
}

/// Three rectangles holding 10, 9 and 1 of 20 points.
#[derive(Clone, Debug)]
pub struct ToyFixture {
    pub partition: BoxPartition,
    pub histogram: SparseHistogram,
    pub points: PointSet,
    pub a1: CellIndex,
    pub a2: CellIndex,
    pub a3: CellIndex,
    /// Box centres of A1, A2, A3.
    pub centers: Vec<Vec<f64>>,
}

impl ToyFixture {
    pub fn mixture(&self) -> RectangleMixture {
        RectangleMixture::from_counts(self.partition.clone(), &[10, 9, 1]).expect("valid counts")
    }
}

/// A1 = [1,2)×[0,1), A2 = [−1,1)×[0,1), A3 = [1,2)×[1,1.5), so the density
/// ratios are 0.5, 0.225 and 0.1.
pub fn toy_fixture() -> ToyFixture {
    let partition = BoxPartition::new(vec![
        AxisBox::new(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap(),
        AxisBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap(),
        AxisBox::new(vec![1.0, 1.0], vec![2.0, 1.5]).unwrap(),
    ])
    .unwrap();
    let mut points = PointSet::with_capacity(2, 20).unwrap();
    for i in 0..10 {
        points.push(&[1.05 + 0.1 * i as f64, 0.5]).unwrap();
    }
    for i in 0..9 {
        points.push(&[-0.9 + 0.2 * i as f64, 0.3]).unwrap();
    }
    points.push(&[1.5, 1.25]).unwrap();
    let histogram = SparseHistogram::ingest(Partition::Boxes(partition.clone()), &points).unwrap();
    ToyFixture {
        partition,
        histogram,
        points,
        a1: CellIndex(vec![0]),
        a2: CellIndex(vec![1]),
        a3: CellIndex(vec![2]),
        centers: vec![vec![1.5, 0.5], vec![0.0, 0.5], vec![1.5, 1.25]],
    }
}
