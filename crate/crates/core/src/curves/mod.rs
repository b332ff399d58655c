//! Excess-mass and mass-volume curves, their oracle counterparts, and the
//! statistical diagnostics (Rademacher penalty, model bias) used to compare
//! them.

mod bias;
mod complexity;
mod empirical;
mod minvol;
mod oracle;
pub mod quadrature;

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use bias::{bias_l1, em_star_class, project_density, BiasMethod, BiasReport, ProjectedDensity};
pub use complexity::{cell_assignment, empirical_rademacher, penalty, RademacherEstimate};
pub use empirical::{
    em_curve_of_scores, empirical_em_curve, empirical_mv_curve, mc_volume, mv_curve_of_scores,
    LevelSets, UniformBox,
};
pub use minvol::{min_volume_set, set_volume, MinVolumeSet};
pub use oracle::{model_em_curve_under, model_level_sets_under, oracle_em_star, DensityOracle};

/// Which quantity the abscissa of a curve represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Excess-mass level `t`.
    Threshold,
    /// Mass level `α`.
    Mass,
}

/// Ordered `(abscissa, value)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSamples {
    pub axis: Axis,
    pub points: Vec<(f64, f64)>,
}

impl CurveSamples {
    pub fn new(axis: Axis, points: Vec<(f64, f64)>) -> Result<Self> {
        check_monotone(points.iter().map(|p| p.0))?;
        Ok(Self { axis, points })
    }

    pub fn abscissas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// CSV with header `abscissa,value`, shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["abscissa", "value"])?;
        for (a, v) in &self.points {
            wtr.write_record([a.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

pub(crate) fn check_monotone(xs: impl Iterator<Item = f64>) -> Result<()> {
    let xs: Vec<f64> = xs.collect();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid("abscissas must be finite"));
    }
    let inc = xs.windows(2).all(|w| w[0] < w[1]);
    let dec = xs.windows(2).all(|w| w[0] > w[1]);
    if inc || dec {
        Ok(())
    } else {
        Err(invalid("abscissas must be strictly monotone"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// An evaluation grid `lo:hi:count:spacing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbscissaGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl AbscissaGrid {
    pub fn new(lo: f64, hi: f64, count: usize, spacing: Spacing) -> Result<Self> {
        if count == 0 {
            return Err(invalid("grid needs at least one point"));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("grid bounds must be finite"));
        }
        if count > 1 && !(lo < hi) {
            return Err(invalid("grid needs lo < hi"));
        }
        if spacing == Spacing::Log && !(lo > 0.0) {
            return Err(invalid("log grid needs lo > 0"));
        }
        Ok(Self { lo, hi, count, spacing })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let last = (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count)
            .map(|i| {
                let u = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.lo + (self.hi - self.lo) * u,
                    Spacing::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * u).exp(),
                }
            })
            .collect();
        // Pin the endpoints exactly.
        v[0] = self.lo;
        v[self.count - 1] = self.hi;
        v
    }
}

impl FromStr for AbscissaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(invalid(format!("grid `{s}` must look like lo:hi:count:spacing")));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| invalid(format!("grid `{s}`: {e}")));
        let count = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| invalid(format!("grid `{s}`: {e}")))?;
        let spacing = match parts[3].trim() {
            "linear" | "lin" => Spacing::Linear,
            "log" => Spacing::Log,
            other => return Err(invalid(format!("unknown spacing `{other}`"))),
        };
        Self::new(num(parts[0])?, num(parts[1])?, count, spacing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: AbscissaGrid = "0.01:0.5:5:log".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 0.01);
        assert_eq!(v[4], 0.5);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        let lin: AbscissaGrid = "0:1:3:linear".parse().unwrap();
        assert_eq!(lin.values(), vec![0.0, 0.5, 1.0]);
        assert!("0:1:3".parse::<AbscissaGrid>().is_err());
        assert!("0:1:3:cubic".parse::<AbscissaGrid>().is_err());
        assert!("0:1:3:log".parse::<AbscissaGrid>().is_err());
        assert!("1:0:3:linear".parse::<AbscissaGrid>().is_err());
    }

    #[test]
    fn curve_csv_format() {
        let c = CurveSamples::new(Axis::Threshold, vec![(0.1, 0.65), (1.0 / 3.0, 0.0)]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "abscissa,value\n0.1,0.65\n0.3333333333333333,0\n");
        assert!(CurveSamples::new(Axis::Mass, vec![(0.1, 0.0), (0.1, 1.0)]).is_err());
    }
}
