//! Synthetic densities with analytic ground truth, and their samplers.

mod heavy_tail;
mod piecewise;
mod rectangles;

pub use heavy_tail::HeavyTail2D;
pub use piecewise::PiecewiseConstantDensity;
pub use rectangles::{toy_fixture, RectangleMixture, ToyFixture};

/// Volume of the intersection of `[lo, hi)` with `[a, b)`.
pub(crate) fn overlap_volume(lo: &[f64], hi: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut v = 1.0;
    for j in 0..lo.len() {
        let w = hi[j].min(b[j]) - lo[j].max(a[j]);
        if w <= 0.0 {
            return 0.0;
        }
        v *= w;
    }
    v
}
