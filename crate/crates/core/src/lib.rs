//! Finite-volume random Schrödinger operators on the torus and the Monte
//! Carlo machinery used to test eigenvalue statistics against the Wegner and
//! Minami bounds, spectral averaging, Poisson level statistics and
//! localization diagnostics.

pub mod ensemble;
pub mod dos;
pub mod error;
pub mod estimates;
mod linalg;
pub mod localization;
pub mod model;
pub mod operators;
pub mod pointprocess;
pub mod report;
pub mod selftest;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    derive_seed, sample_disorder, sample_disorder_at, DisorderRealization, DistributionKind, Mode, SeedKey,
    SiteDistribution, TorusGeometry,
};
pub use operators::{
    build_continuum, build_lattice, periodic_laplacian, AssembledOperator, PeriodicPotential, ProfileShape,
    SingleSiteProfile,
};
pub use spectral::{
    count_at_most, count_in, count_many, eigen_full, eigenpairs_in, eigenvalues_in, local_projection_trace,
    resolvent_block_norm, trace_function, Interval, Resolvent, Spectrum,
};
pub use num_complex::Complex64;
