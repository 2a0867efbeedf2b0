//! Fixtures shared by the benchmarks.

use anderson_core::ensemble::ModelSpec;
use anderson_core::{AssembledOperator, SiteDistribution};

/// Uniform disorder on `[0, 1]` at coupling `lambda`.
pub fn lattice(d: usize, lambda: f64) -> ModelSpec {
    ModelSpec::lattice(d, SiteDistribution::uniform(1.0).with_coupling(lambda))
}

pub fn realization(d: usize, side: usize, lambda: f64) -> AssembledOperator {
    lattice(d, lambda).realize(side, 7, 0).expect("fixture")
}
