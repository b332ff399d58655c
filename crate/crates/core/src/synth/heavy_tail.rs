use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::curves::DensityOracle;
use crate::points::PointSet;

/// `f(x, y) = ½ (1+|x|)^-3 (1+|y|)^-2` on ℝ².
///
/// The coordinates are independent: `|X|` has survival `(1+x)^-2` and `|Y|`
/// has survival `(1+y)^-1`, each with a symmetric random sign.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeavyTail2D;

/// `P(a ≤ Z < b)` for a symmetric variable with `P(|Z| ≥ z) = (1+z)^-p`.
fn interval_mass(a: f64, b: f64, p: i32) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    // Half the survival of |Z| beyond z ≥ 0; written so that far-tail
    // intervals do not cancel.
    let tail = |z: f64| 0.5 * (1.0 + z).powi(-p);
    if a >= 0.0 {
        tail(a) - tail(b)
    } else if b <= 0.0 {
        tail(-b) - tail(-a)
    } else {
        1.0 - tail(-a) - tail(b)
    }
}

impl HeavyTail2D {
    /// `P(X ∈ [−L, L]²) = (1 − (1+L)^-2)(1 − (1+L)^-1)`.
    pub fn box_mass_symmetric(l: f64) -> f64 {
        (1.0 - (1.0 + l).powi(-2)) * (1.0 - (1.0 + l).recip())
    }

    /// CDF of `|X|`.
    pub fn abs_x_cdf(x: f64) -> f64 {
        if x <= 0.0 { 0.0 } else { 1.0 - (1.0 + x).powi(-2) }
    }

    /// CDF of `|Y|`.
    pub fn abs_y_cdf(y: f64) -> f64 {
        if y <= 0.0 { 0.0 } else { 1.0 - (1.0 + y).recip() }
    }
}

impl DensityOracle for HeavyTail2D {
    fn dim(&self) -> usize {
        2
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        0.5 * (1.0 + x[0].abs()).powi(-3) * (1.0 + x[1].abs()).powi(-2)
    }

    fn sup_norm(&self) -> f64 {
        0.5
    }

    // With a = 1+|x|, b = 1+|y| and s = 2t the level set is a³b² ≤ 1/s.
    fn level_volume(&self, t: f64) -> f64 {
        if t >= 0.5 {
            return 0.0;
        }
        let s = 2.0 * t;
        4.0 * (2.0 * s.powf(-0.5) - 3.0 * s.cbrt().recip() + 1.0)
    }

    fn level_mass(&self, t: f64) -> f64 {
        if t >= 0.5 {
            return 0.0;
        }
        let s = 2.0 * t;
        (1.0 + 3.0 * s.cbrt().powi(2) - 4.0 * s.sqrt()).max(0.0)
    }

    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        Some(interval_mass(lo[0], hi[0], 2) * interval_mass(lo[1], hi[1], 1))
    }

    fn sample(&self, n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords = Vec::with_capacity(2 * n);
        for _ in 0..n {
            // 1 − U lies in (0, 1], keeping the inverse CDF finite.
            let u: f64 = 1.0 - rng.random::<f64>();
            let ax = u.powf(-0.5) - 1.0;
            let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let v: f64 = 1.0 - rng.random::<f64>();
            let ay = v.recip() - 1.0;
            let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
            coords.push(sx * ax);
            coords.push(sy * ay);
        }
        PointSet::from_flat(2, coords).expect("finite draws")
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "family": "heavy-tail",
            "d": 2,
            "density": "0.5 * (1+|x|)^-3 * (1+|y|)^-2",
            "sup_norm": 0.5,
            "x_exponent": 3,
            "y_exponent": 2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::quadrature::TensorGauss;
    use crate::curves::{mc_volume, oracle_em_star, UniformBox};

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn tail_mass_at_500() {
        let m = HeavyTail2D::box_mass_symmetric(500.0);
        assert_eq!((m * 1e5).round() / 1e5, 0.998);
        assert!((m - (1.0 - 1.0 / 251_001.0) * (500.0 / 501.0)).abs() < 1e-15);
        assert_eq!(HeavyTail2D.box_mass(&[-500.0, -500.0], &[500.0, 500.0]), Some(m));
        let pts = HeavyTail2D.sample(100_000, 1);
        let inside = pts.iter().filter(|p| p[0].abs() < 500.0 && p[1].abs() < 500.0).count();
        assert!((inside as f64 / 1e5 - m).abs() < 5e-4);
    }

    #[test]
    fn median_abs_y_is_one() {
        let mut ys: Vec<f64> = HeavyTail2D.sample(20_001, 3).iter().map(|p| p[1].abs()).collect();
        ys.sort_by(f64::total_cmp);
        assert!((ys[10_000] - 1.0).abs() < 0.05, "{}", ys[10_000]);
    }

    #[test]
    fn samplers_pass_ks() {
        // 1% critical value of the one-sample KS statistic.
        let crit = 1.628 / (10_000f64).sqrt();
        let mut pass = 0;
        for seed in 0..100 {
            let pts = HeavyTail2D.sample(10_000, seed);
            let dx = ks_statistic(pts.iter().map(|p| p[0].abs()).collect(), HeavyTail2D::abs_x_cdf);
            let dy = ks_statistic(pts.iter().map(|p| p[1].abs()).collect(), HeavyTail2D::abs_y_cdf);
            if dx < crit && dy < crit {
                pass += 1;
            }
        }
        assert!(pass >= 95, "{pass}");
        let pts = HeavyTail2D.sample(10_000, 5);
        let pos = pts.iter().filter(|p| p[0] > 0.0).count() as f64 / 1e4;
        assert!((pos - 0.5).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(HeavyTail2D.sample(50, 9), HeavyTail2D.sample(50, 9));
        assert_ne!(HeavyTail2D.sample(50, 9), HeavyTail2D.sample(50, 10));
    }

    #[test]
    fn normalization_and_box_mass() {
        let q = TensorGauss::new(16, 8);
        let (lo, hi) = ([-0.5, 0.3], [1.7, 2.0]);
        // Split at the kink on x = 0.
        let quad = q.integrate(&lo, &[0.0, hi[1]], |x| HeavyTail2D.pdf(x))
            + q.integrate(&[0.0, lo[1]], &hi, |x| HeavyTail2D.pdf(x));
        assert!((HeavyTail2D.box_mass(&lo, &hi).unwrap() - quad).abs() < 1e-12);
        let all = HeavyTail2D.box_mass(&[f64::NEG_INFINITY; 2], &[f64::INFINITY; 2]).unwrap();
        assert!((all - 1.0).abs() < 1e-15);
        // Far-tail cell: relative accuracy is kept.
        let far = HeavyTail2D.box_mass(&[1e6, 0.0], &[1e6 + 1.0, 1.0]).unwrap();
        let approx = 0.5 * 2.0 * (1e6f64 + 1.0).powi(-3) * 0.25;
        assert!((far / approx - 1.0).abs() < 1e-5);
    }

    #[test]
    fn level_volume_examples() {
        assert_eq!(HeavyTail2D.level_volume(0.5), 0.0);
        assert!(HeavyTail2D.level_volume(0.5 - 1e-12) < 1e-5);
        // t = 1/8: s = 1/4.
        let expect = 4.0 * (2.0 * 2.0 - 3.0 * 4f64.cbrt() + 1.0);
        assert!((HeavyTail2D.level_volume(0.125) - expect).abs() < 1e-12);
        let mut t = 1e-4;
        let mut prev = f64::INFINITY;
        while t <= 0.5 {
            let lam = HeavyTail2D.level_volume(t);
            assert!(t * lam <= 1.0);
            assert!(lam <= prev);
            prev = lam;
            t *= 1.05;
        }
    }

    #[test]
    fn level_volume_matches_monte_carlo() {
        let t = 0.125;
        let lam = HeavyTail2D.level_volume(t);
        let domain = UniformBox::cube(2, -2.0, 2.0).unwrap();
        let m = 400_000;
        let est = mc_volume(|x: &[f64]| HeavyTail2D.pdf(x), t, &domain, m, 11).unwrap();
        let p = lam / domain.volume();
        let se = domain.volume() * (p * (1.0 - p) / m as f64).sqrt();
        assert!((est - lam).abs() < 3.0 * se, "{est} vs {lam} (se {se})");
    }

    #[test]
    fn level_mass_matches_quadrature() {
        for &t in &[0.01, 0.05, 0.1, 0.25, 0.4] {
            // Integrate f over the level set: in each quadrant the set is
            // |y| ≤ (2t)^-1/2 (1+|x|)^-3/2 − 1 for |x| ≤ (2t)^-1/3 − 1.
            let s: f64 = 2.0 * t;
            let xmax = s.cbrt().recip() - 1.0;
            let q = TensorGauss::new(20, 16);
            let inner = q.integrate(&[0.0], &[xmax], |x| {
                let a = 1.0 + x[0];
                let ymax = s.powf(-0.5) * a.powf(-1.5) - 1.0;
                0.5 * a.powi(-3) * interval_mass(0.0, ymax, 1) * 2.0
            });
            let alpha = 4.0 * inner;
            assert!((HeavyTail2D.level_mass(t) - alpha).abs() < 1e-10, "t={t}");
            // The complement carries the rest of the mass.
            let outside = 1.0 - alpha;
            assert!((HeavyTail2D.level_mass(t) + outside - 1.0).abs() < 1e-12);
        }
        assert_eq!(HeavyTail2D.level_mass(0.5), 0.0);
    }

    #[test]
    fn em_star_examples() {
        assert_eq!(oracle_em_star(&HeavyTail2D, 0.5).unwrap(), 0.0);
        // Monte Carlo of ∫ (f − t)⁺ over a box holding the whole level set.
        let t = 0.1;
        // One quadrant, by symmetry.
        let domain = UniformBox::new(vec![0.0, 0.0], vec![1.0, 1.5]).unwrap();
        let pts = domain.sample(400_000, 2);
        let mc = 4.0 * domain.volume()
            * pts.iter().map(|x| (HeavyTail2D.pdf(x) - t).max(0.0)).sum::<f64>()
            / pts.len() as f64;
        let em = oracle_em_star(&HeavyTail2D, t).unwrap();
        assert!((mc - em).abs() < 2e-3, "{mc} vs {em}");
        // Closed form of EM* in s = 2t.
        let s: f64 = 2.0 * t;
        let closed = 1.0 + 9.0 * s.cbrt().powi(2) - 8.0 * s.sqrt() - 2.0 * s;
        assert!((em - closed).abs() < 1e-12);
    }
}
