//! Particle-based approximation of intractable distributions.
//!
//! The library moves a finite set of particles `{x_i}` so that their empirical
//! distribution matches a target density `p` known only up to normalization.
//! Each iteration applies the velocity field
//!
//! ```text
//! v(y) = (1/n) * sum_j [ score(x_j) * k(x_j, y) + grad_x k(x_j, y) ]
//! ```
//!
//! where `score = grad log p` and `k` is a positive-definite kernel.  Fixed
//! points of this map are exactly the particle sets whose empirical Stein
//! discrepancy under `k` vanishes; for kernels with a finite feature expansion
//! `k(x, y) = sum_l phi_l(x) phi_l(y)` this reduces to a system of moment
//! constraints `E_emp[score(x) phi_l(x) + grad phi_l(x)] = 0`, one per feature.
//! With the linear kernel and a Gaussian target those constraints pin the
//! first two moments exactly — the property the `harness` crate measures.
//!
//! Module map:
//! * [`targets`] — densities with analytic scores, exact samplers, moments.
//! * [`kernels`] — RBF, linear, and random-feature kernels plus bandwidth
//!   selection.
//! * [`svgd`] — the particle update loop, residuals, and rank diagnostics.
//! * [`metrics`] — kernel Stein discrepancy, MMD, moment-error reports, and a
//!   solver for Stein equations with polynomial right-hand sides.
//!
//! All randomness flows through explicit 64-bit seeds (ChaCha8 streams); no
//! global RNG state exists, so every public operation is reproducible from its
//! arguments alone.

pub mod error;
pub mod kernels;
mod linalg;
pub mod metrics;
mod particles;
pub mod rng;
pub mod svgd;
pub mod targets;

pub use error::{Error, Result};
pub use particles::ParticleSet;
