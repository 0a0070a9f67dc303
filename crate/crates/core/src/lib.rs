//! Two-stage inverse identification of porous microstructure from
//! macroscopic displacements.
//!
//! Stage 1 fits the effective gradient-elastic moduli `(λ, μ, l)` of a
//! plane-strain cantilever to sampled top-surface deflections. Stage 2 fits
//! the pore diameter and volume fraction of a random periodic RVE whose
//! second-order homogenized tangents `(C, D)` reproduce the stage-1 moduli.

pub mod bell;
pub mod error;
pub mod homogenizer;
pub mod inverse;
pub mod macro_solver;
pub mod measurement;
pub mod micro_fem;
pub mod optimize;
pub mod quadrature;
pub mod rve;
pub mod skyline;
pub mod voigt;

pub use error::{Error, Result};
