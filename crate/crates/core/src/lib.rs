//! Thomas-Fermi and Gross-Pitaevskii ground states of a rapidly rotating
//! two-dimensional Bose-Einstein condensate in a homogeneous trap `r^s`
//! (`s > 2`), with the vortex-lattice and giant-vortex trial states that
//! bound the GP energy from above.
//!
//! Units: `hbar = 2m = 1`, trap coefficient 1. All lengths are in the
//! rescaled frame where the GP functional reads
//!
//! ```text
//! E[psi] = ∫ |(∇ - iA)psi|^2 + |psi|^2 (r^s + |psi|^2) / eps^2 - omega^2 r^2 |psi|^2 / 4
//! ```
//!
//! with `A = (omega / 2) e_z × r`.

pub mod asymptotics;
pub mod error;
pub mod gp;
pub mod potentials;
pub mod quadrature;
pub mod tf;
pub mod trial;

pub use error::{Error, Result};
