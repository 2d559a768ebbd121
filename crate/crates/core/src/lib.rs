//! Lowest-order Nédélec discretisation of the time-harmonic Maxwell operator
//! on a box, hierarchical-matrix compression of its inverse, and numerical
//! checks of the approximation theory behind that compression.
//!
//! Module map:
//!
//! * [`mesh`]: Kuhn tetrahedral meshes of a cube.
//! * [`fem`]: Whitney edge elements, Galerkin assembly, discrete gradients,
//!   projections, dual functionals and interpolants.
//! * [`cluster`]: geometric cluster trees and admissible block partitions.
//! * [`hmatrix`]: blockwise low-rank storage, compression and error estimation.
//! * [`inverse`]: dense inverses, block singular values, rank sweeps and fits.
//! * [`harmonic`]: discrete harmonic spaces, Caccioppoli ratios, local
//!   Helmholtz splits and discrete potentials.

pub mod cluster;
pub mod error;
pub mod fem;
pub mod field;
pub mod harmonic;
pub mod hmatrix;
pub mod inverse;
pub mod linalg;
pub mod mesh;
pub mod quadrature;

pub use error::{Error, Result};
pub use linalg::C64;
