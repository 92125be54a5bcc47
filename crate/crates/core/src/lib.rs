//! Penalty-method simulation of obliquely reflected diffusions.
//!
//! A reflected diffusion in a smooth domain `D` is approximated by a family of
//! ordinary SDEs whose extra drift `f_n(x) = g_n(phi(x)) r(y(x))` pushes paths
//! back along the reflection field `r` as they approach or cross `∂D`. The
//! crate provides:
//!
//! - [`geometry`]: closed-form smooth domains (signed distance, nearest
//!   boundary point, inward normal, tube radius);
//! - [`fields`]: drift/diffusion coefficients and normalized reflection fields;
//! - [`penalty`]: penalty schedules `g_n`, the penalty vector field, and
//!   numerical certifiers for the hypotheses that make the method converge;
//! - [`integrator`]: Euler-Maruyama ensembles of the penalized SDE;
//! - [`reference`]: reflected-diffusion simulators used as ground truth;
//! - [`diagnostics`]: distances and convergence tables comparing the two.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod integrator;
pub mod linalg;
pub mod penalty;
pub mod quadrature;
pub mod reference;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{Matrix, Point};
