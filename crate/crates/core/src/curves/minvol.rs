use crate::error::{invalid, Error, Result};
use crate::hypergrid::{CellIndex, Partition, SparseHistogram};

/// An empirical minimum-volume set on a partition.
#[derive(Clone, Debug, PartialEq)]
pub struct MinVolumeSet {
    /// Cells in lexicographic index order.
    pub cells: Vec<CellIndex>,
    pub mass: f64,
    pub volume: f64,
}

/// Lebesgue measure of a union of cells. On equal-volume partitions this is
/// `|cells| · v`, otherwise the sum over cells in index order.
pub fn set_volume<'a>(partition: &Partition, cells: impl IntoIterator<Item = &'a CellIndex>) -> f64 {
    match partition.uniform_volume() {
        Some(v) => cells.into_iter().count() as f64 * v,
        None => {
            let mut cells: Vec<&CellIndex> = cells.into_iter().collect();
            cells.sort();
            cells.into_iter().map(|c| partition.cell_volume(c)).sum()
        }
    }
}

/// Smallest-volume union of cells with empirical mass `≥ alpha − phi`.
///
/// On equal-volume partitions, taking the most populated cells first is
/// optimal. With unequal volumes the problem is a 0/1 knapsack over integer
/// counts and is solved exactly by dynamic programming, costing
/// `O(cells · n)`.
pub fn min_volume_set(hist: &SparseHistogram, alpha: f64, phi: f64) -> Result<MinVolumeSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("mass level {alpha} is outside (0, 1]")));
    }
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(invalid(format!("tolerance must be nonnegative, got {phi}")));
    }
    if hist.n() == 0 {
        return Err(Error::NoData);
    }
    let target = alpha - phi;
    if target > 1.0 {
        return Err(Error::Infeasible(format!("mass {target} exceeds 1")));
    }
    let n = hist.n();
    // Smallest count c with c/n ≥ target, using the same comparison as the
    // mass check below.
    let reaches = |c: u64| c as f64 / n as f64 >= target;
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let need = lo;

    let chosen = if need == 0 {
        Vec::new()
    } else if hist.partition().uniform_volume().is_some() {
        greedy_by_count(hist, need)
    } else {
        knapsack(hist, need)?
    };
    let mut cells: Vec<CellIndex> = chosen;
    cells.sort();
    let count: u64 = cells.iter().map(|c| hist.count(c)).sum();
    Ok(MinVolumeSet {
        volume: set_volume(hist.partition(), &cells),
        mass: count as f64 / n as f64,
        cells,
    })
}

fn greedy_by_count(hist: &SparseHistogram, need: u64) -> Vec<CellIndex> {
    let mut order: Vec<(&CellIndex, u64)> = hist.iter().collect();
    // Larger counts first; lexicographic index breaks ties.
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut acc = 0;
    let mut out = Vec::new();
    for (cell, c) in order {
        if acc >= need {
            break;
        }
        acc += c;
        out.push(cell.clone());
    }
    out
}

fn knapsack(hist: &SparseHistogram, need: u64) -> Result<Vec<CellIndex>> {
    let mut items: Vec<(&CellIndex, u64, f64)> = hist
        .iter()
        .map(|(c, k)| (c, k, hist.volume(c)))
        .collect();
    // Densest first so that ties in volume favour the ratio order.
    items.sort_by(|a, b| {
        let ra = a.1 as f64 / a.2;
        let rb = b.1 as f64 / b.2;
        rb.total_cmp(&ra).then_with(|| a.0.cmp(b.0))
    });
    let need = need as usize;
    let width = need + 1;
    if items.len().saturating_mul(width) > 50_000_000 {
        return Err(invalid(format!(
            "exact minimum-volume search over {} unequal cells and {need} points is too large",
            items.len()
        )));
    }
    // best[j]: least volume reaching a count of j (capped at `need`).
    let mut best = vec![f64::INFINITY; width];
    best[0] = 0.0;
    // pred[i * width + j]: source state when item i last improved state j.
    let mut pred = vec![u32::MAX; items.len() * width];
    for (i, &(_, c, v)) in items.iter().enumerate() {
        // Descending sources: every write goes to a state ≥ its source, so
        // no source is read after being updated in the same pass.
        for j in (0..width).rev() {
            if !best[j].is_finite() {
                continue;
            }
            let to = (j + c as usize).min(need);
            let cand = best[j] + v;
            if cand < best[to] {
                best[to] = cand;
                pred[i * width + to] = j as u32;
            }
        }
    }
    if !best[need].is_finite() {
        return Err(Error::Infeasible("mass target cannot be reached".into()));
    }
    // The last item to improve a state determines its final value.
    let mut out = Vec::new();
    let mut j = need;
    for i in (0..items.len()).rev() {
        if j == 0 {
            break;
        }
        let from = pred[i * width + j];
        if from != u32::MAX {
            out.push(items[i].0.clone());
            j = from as usize;
        }
    }
    debug_assert_eq!(j, 0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergrid::{AxisBox, BoxPartition, GridSpec};
    use crate::synth::toy_fixture;
    use proptest::prelude::*;

    /// Exhaustive minimum volume over all unions meeting the mass target.
    fn brute_force(hist: &SparseHistogram, target: f64) -> Option<f64> {
        let cells: Vec<(&CellIndex, u64)> = hist.iter().collect();
        let m = cells.len();
        let n = hist.n() as f64;
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << m) {
            let chosen: Vec<&CellIndex> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| cells[i].0).collect();
            let count: u64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| cells[i].1).sum();
            if count as f64 / n >= target {
                let v = set_volume(hist.partition(), chosen);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        best
    }

    #[test]
    fn toy_min_volume_sets() {
        let toy = toy_fixture();
        let h = &toy.histogram;
        let s = min_volume_set(h, 0.5, 0.0).unwrap();
        assert_eq!(s.cells, vec![toy.a1.clone()]);
        assert_eq!(s.volume, 1.0);
        // A3 (volume 0.5, mass 0.05) beats A2 (volume 2, mass 0.45) here.
        let s = min_volume_set(h, 0.55, 0.0).unwrap();
        assert_eq!(s.cells, vec![toy.a1.clone(), toy.a3.clone()]);
        assert_eq!(s.volume, brute_force(h, 0.55).unwrap());
        let s = min_volume_set(h, 0.95, 0.0).unwrap();
        assert_eq!(s.cells, vec![toy.a1.clone(), toy.a2.clone()]);
        let s = min_volume_set(h, 1.0, 0.0).unwrap();
        assert_eq!(s.cells.len(), 3);
        // phi relaxes the target.
        let s = min_volume_set(h, 0.55, 0.05).unwrap();
        assert_eq!(s.cells, vec![toy.a1.clone()]);
    }

    #[test]
    fn uniform_grid_uses_ratio_order() {
        let g = GridSpec::new(1, 0.5).unwrap();
        let h = SparseHistogram::from_counts(
            g,
            [(CellIndex(vec![0]), 5), (CellIndex(vec![1]), 3), (CellIndex(vec![2]), 2)],
        )
        .unwrap();
        let s = min_volume_set(&h, 0.55, 0.0).unwrap();
        assert_eq!(s.cells, vec![CellIndex(vec![0]), CellIndex(vec![1])]);
        assert_eq!(s.volume, 1.0);
        assert_eq!(s.mass, 0.8);
    }

    #[test]
    fn parameter_errors() {
        let toy = toy_fixture();
        assert!(min_volume_set(&toy.histogram, 0.0, 0.0).is_err());
        assert!(min_volume_set(&toy.histogram, 1.2, 0.0).is_err());
        assert!(min_volume_set(&toy.histogram, 0.5, -0.1).is_err());
        let empty = SparseHistogram::empty(GridSpec::new(1, 1.0).unwrap());
        assert!(matches!(min_volume_set(&empty, 0.5, 0.0), Err(Error::NoData)));
        let s = min_volume_set(&toy.histogram, 0.3, 0.5).unwrap();
        assert!(s.cells.is_empty());
    }

    fn arb_boxes() -> impl Strategy<Value = SparseHistogram> {
        // Dyadic widths keep every volume sum exact.
        prop::collection::vec((1u32..9, 1u64..30), 1..=12).prop_map(|cells| {
            let mut x = 0.0;
            let mut boxes = Vec::new();
            let mut counts = Vec::new();
            for (i, (w, c)) in cells.into_iter().enumerate() {
                let width = w as f64 / 8.0;
                boxes.push(AxisBox::new(vec![x, 0.0], vec![x + width, 1.0]).unwrap());
                x += width;
                counts.push((CellIndex(vec![i as i64]), c));
            }
            SparseHistogram::from_counts(BoxPartition::new(boxes).unwrap(), counts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn exact_on_unequal_boxes(h in arb_boxes(), alpha in 0.01f64..=1.0) {
            let s = min_volume_set(&h, alpha, 0.0).unwrap();
            prop_assert!(s.mass >= alpha);
            prop_assert_eq!(Some(s.volume), brute_force(&h, alpha));
        }

        #[test]
        fn greedy_exact_on_grids(
            counts in prop::collection::vec(1u64..30, 1..=12),
            alpha in 0.01f64..=1.0,
        ) {
            let g = GridSpec::new(1, 0.3).unwrap();
            let h = SparseHistogram::from_counts(
                g,
                counts.iter().enumerate().map(|(i, &c)| (CellIndex(vec![i as i64]), c)),
            ).unwrap();
            let s = min_volume_set(&h, alpha, 0.0).unwrap();
            prop_assert!(s.mass >= alpha);
            prop_assert_eq!(Some(s.volume), brute_force(&h, alpha));
        }
    }
}
