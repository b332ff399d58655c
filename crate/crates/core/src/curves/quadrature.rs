//! Tensor-product Gauss–Legendre rules on axis-aligned boxes.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// A fixed-order Gauss–Legendre rule applied per axis, optionally on a
/// uniform subdivision of the box.
#[derive(Clone, Debug)]
pub struct TensorGauss {
    nodes: Vec<(f64, f64)>,
    subdivisions: usize,
}

impl TensorGauss {
    /// `order` points per axis on each of `subdivisions` equal pieces per axis.
    pub fn new(order: usize, subdivisions: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("order >= 1");
        let rule = GaussLegendre::new(order);
        Self {
            nodes: rule.as_node_weight_pairs().to_vec(),
            subdivisions: subdivisions.max(1),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Abscissa/weight pairs for one axis of `[a, b]`, composite over the
    /// subdivisions.
    fn axis_rule(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let m = self.subdivisions;
        let h = (b - a) / m as f64;
        let mut out = Vec::with_capacity(m * self.nodes.len());
        for s in 0..m {
            let lo = a + h * s as f64;
            let mid = lo + 0.5 * h;
            for &(x, w) in &self.nodes {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    /// `∫_{[lo,hi]} f`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, lo: &[f64], hi: &[f64], mut f: F) -> f64 {
        let d = lo.len();
        let axes: Vec<Vec<(f64, f64)>> = (0..d).map(|j| self.axis_rule(lo[j], hi[j])).collect();
        let k = axes[0].len();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for j in 0..d {
                let (xj, wj) = axes[j][idx[j]];
                x[j] = xj;
                w *= wj;
            }
            total += w * f(&x);
            let mut j = 0;
            loop {
                idx[j] += 1;
                if idx[j] < k {
                    break;
                }
                idx[j] = 0;
                j += 1;
                if j == d {
                    return total;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_low_degree_polynomials() {
        let q = TensorGauss::new(4, 1);
        let v = q.integrate(&[0.0, -1.0], &[2.0, 1.0], |x| x[0].powi(7) * x[1].powi(2) + 1.0);
        // ∫0^2 x^7 dx · ∫-1^1 y^2 dy + area = 32 · 2/3 + 4
        assert!((v - (32.0 * 2.0 / 3.0 + 4.0)).abs() < 1e-11);
    }

    #[test]
    fn composite_converges_on_kink() {
        let f = |x: &[f64]| (x[0] - 0.3).abs();
        let exact = 0.5 * (0.09 + 0.49);
        let coarse = (TensorGauss::new(4, 1).integrate(&[0.0], &[1.0], f) - exact).abs();
        let fine = (TensorGauss::new(4, 16).integrate(&[0.0], &[1.0], f) - exact).abs();
        assert!(fine < coarse);
        assert!(fine < 1e-4);
    }
}
