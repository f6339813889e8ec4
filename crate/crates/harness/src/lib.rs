//! Experiment harness for particle-based moment matching.
//!
//! The library side of the `steinmatch` binary.  It turns a JSON experiment
//! description into a deterministic grid of runs — target family x particle
//! count x method x trial — and reduces each run to one CSV row of moment
//! errors and kernel diagnostics.  Five experiment kinds are supported:
//!
//! * `gaussian_sweep` — standard Gaussian, particle-count sweep;
//! * `condition_sweep` — anisotropic Gaussians over a covariance condition
//!   number grid;
//! * `gmm_alpha_sweep` — Gaussian mixtures whose component means are scaled
//!   by a spread factor `alpha` (0 = standard Gaussian);
//! * `rbm` — Gaussian–Bernoulli restricted Boltzmann machines;
//! * `ksd_decay` — random cosine-feature kernels over a feature-count grid
//!   with `n = m`, measuring how the Stein discrepancy of the converged
//!   particles falls as the feature bank grows.
//!
//! Methods: `monte_carlo` draws exact samples; the `svgd_*` methods run the
//! particle iteration with an RBF, linear, linear-plus-random-cosine, or pure
//! random-cosine kernel.  Every random draw derives from the master seed via
//! a fixed tag scheme, rows are sorted by a deterministic key, and float
//! formatting is fixed-width, so the emitted CSV is a pure function of the
//! configuration — independent of thread count and wall clock.

pub mod check;
pub mod config;
pub mod experiment;
pub mod methods;
pub mod report;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, Method, SolverSettings};
pub use experiment::{run_experiment, ExperimentOutcome};
pub use report::{emit_csv, emit_summary, parse_csv, ResultRow};
