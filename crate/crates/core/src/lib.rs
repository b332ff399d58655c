//! Excess-mass anomaly ranking on sparse hypercube partitions.
//!
//! Points are binned into a [`SparseHistogram`]; [`em_fit::fit`] turns it into
//! a nested family of empirical clusters whose entry levels give a
//! piecewise-constant scoring function. The [`curves`] module evaluates
//! scoring functions by excess-mass and mass-volume curves, against either
//! data or an analytic [`curves::DensityOracle`] from [`synth`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod em_fit;
mod error;
pub mod hypergrid;
pub mod points;
pub mod synth;

pub use em_fit::{fit, NestedClusterModel, ThresholdSchedule};
pub use error::{Error, Result};
pub use hypergrid::{AxisBox, BoxPartition, CellIndex, GridSpec, Partition, SparseHistogram};
pub use points::PointSet;
