//! Numerical toolkit for sectorial resolvent analysis of symmetric
//! parabolic systems: Fourier-multiplier whole-space solvers, half-space
//! reflection and corrector solvers, a partition-of-unity parametrix on
//! bounded domains, Laplace-transform evolution, exponential decay
//! estimation, and randomized operator-family bound estimation.

pub mod bent;
pub mod coeff;
pub mod error;
pub mod fft;
pub mod grid;
pub mod halfspace;
pub mod linalg;
pub mod localization;
pub mod norms;
pub mod rng;
pub mod quad;
pub mod sector;
pub mod symbol;
pub mod wholespace;

pub use coeff::{CoefficientPair, MatField};
pub use grid::{Geometry, GridField};
pub use norms::{DiscreteNorms, NormKind};
pub use sector::Sector;
