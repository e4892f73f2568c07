//! Positivity-preserving implicit-explicit solver for the compressible
//! Navier-Stokes equations: Q^k discontinuous Galerkin for the Euler part,
//! interior-penalty DG / spectral elements for the viscous part, combined by
//! Strang splitting on uniform rectangular meshes.

// `!(x >= eps)` is deliberate: NaN must fail the positivity tests.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod dg;
pub mod driver;
pub mod euler;
pub mod linalg;
pub mod mesh;
pub mod parabolic;
pub mod quadrature;

pub use error::{Error, Result};
