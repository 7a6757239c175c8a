//! Adaptive P1 finite elements for semilinear reaction-diffusion systems posed on
//! continuously deforming planar domains and evolving surfaces.
//!
//! Every problem is pulled back to the fixed reference square `[0,1]²` through a
//! time-dependent map `A(ξ, t)`. The weak form then carries the Jacobian determinant
//! `J` and the inverse Jacobian `K` as coefficients, and all discretisation work
//! (meshing, assembly, error estimation, adaptation) happens on the reference square.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration and the
//! command line live in the `growfem` companion crate.
//!
//! Module map:
//!
//! * [`mesh`]: conforming triangulations with newest-vertex bisection and coarsening.
//! * [`geometry`]: domain maps and their metric terms `K`, `J`, `∂tJ`.
//! * [`kinetics`]: reaction terms, the semi-implicit split and manufactured sources.
//! * [`fem`]: the P1 space, quadrature and assembly of mass/stiffness/load.
//! * [`solver`]: sparse Krylov and direct linear solvers.
//! * [`stepper`]: the modified implicit Euler step and the time loop.
//! * [`estimator`]: residual-based local error indicators.
//! * [`adapt`]: equidistribution marking and the per-step adaptation loop.
//! * [`bench`]: manufactured-solution error measurement and EOC tables.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adapt;
pub mod bench;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod geometry;
pub mod kinetics;
pub(crate) mod math;
pub mod mesh;
pub mod solver;
pub mod stepper;

pub use error::{Error, Result};
