//! Full-covariance Gaussian target.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;
use crate::particles::ParticleSet;
use crate::rng;
use crate::targets::Moments;

/// Relative tolerance for the symmetry check on a supplied covariance.
const SYMMETRY_REL_TOL: f64 = 1e-12;
/// Relative tolerance on `precision * covariance = I` after inversion.
const INVERSE_REL_TOL: f64 = 1e-8;

/// `N(mean, covariance)` with everything precomputed at construction:
/// the precision matrix `Q = covariance^{-1}` (used by the score) and the
/// lower Cholesky factor `L` (used by the exact sampler).
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    precision: Array2<f64>,
    chol_lower: Array2<f64>,
}

impl GaussianTarget {
    /// Validate and precompute.  The covariance must be square, match the
    /// mean's length, be symmetric to within `1e-12` relative, and be
    /// positive definite; the computed inverse must reproduce the identity
    /// to within `1e-8` relative.
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("Gaussian target requires d >= 1"));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::dim(
                "Gaussian covariance",
                d,
                covariance.nrows().max(covariance.ncols()),
            ));
        }
        if !mean.iter().all(|v| v.is_finite()) || !covariance.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Gaussian parameters".into()));
        }
        let scale = covariance
            .iter()
            .fold(0f64, |acc, &v| acc.max(v.abs()))
            .max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > SYMMETRY_REL_TOL * scale {
                    return Err(Error::invalid(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol_lower = linalg::cholesky_lower(&covariance)?;
        let precision = {
            let mut q = linalg::spd_inverse(&covariance)?;
            // Restore exact symmetry lost to rounding during inversion.
            for i in 0..d {
                for j in (i + 1)..d {
                    let s = 0.5 * (q[[i, j]] + q[[j, i]]);
                    q[[i, j]] = s;
                    q[[j, i]] = s;
                }
            }
            q
        };
        // Sanity: Q * Sigma must be the identity to within rounding.
        let prod = precision.dot(&covariance);
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                if (prod[[i, j]] - want).abs() > INVERSE_REL_TOL {
                    return Err(Error::invalid(
                        "covariance is too ill-conditioned to invert reliably",
                    ));
                }
            }
        }
        Ok(Self {
            mean,
            covariance,
            precision,
            chol_lower,
        })
    }

    /// The standard normal `N(0, I_d)`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(Array1::zeros(d), Array2::eye(d))
    }

    /// Random anisotropic Gaussian with a prescribed covariance condition
    /// number.
    ///
    /// The mean is uniform on `[-3, 3]^d`.  The covariance is `I + a L L^T`
    /// with `L` a `d x d` standard normal matrix and `a >= 0` chosen by
    /// bisection so that the eigenvalue ratio `lambda_max / lambda_min`
    /// equals `condition` (to well inside 1e-6 relative).  `condition == 1`
    /// returns the identity covariance; `condition > 1` with `d == 1` is
    /// impossible and rejected.
    pub fn random_nonspherical(d: usize, condition: f64, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("Gaussian target requires d >= 1"));
        }
        if !condition.is_finite() || condition < 1.0 {
            return Err(Error::invalid(format!(
                "condition number must be finite and >= 1, got {condition}"
            )));
        }
        let mut rng = rng::rng_from_seed(seed);
        let mean = rng::uniform_vector(&mut rng, d, -3.0, 3.0);
        if condition == 1.0 {
            return Self::new(mean, Array2::eye(d));
        }
        if d == 1 {
            return Err(Error::invalid(
                "a 1-dimensional covariance always has condition number 1",
            ));
        }
        let lambda = rng::standard_normal_matrix(&mut rng, d, d);
        let mut gram = lambda.dot(&lambda.t());
        // Symmetrize exactly; the eigensolver and Cholesky both assume it.
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (gram[[i, j]] + gram[[j, i]]);
                gram[[i, j]] = s;
                gram[[j, i]] = s;
            }
        }
        let eigs = linalg::symmetric_eigenvalues(&gram)?;
        let s_min = eigs.first().copied().unwrap_or(0.0).max(0.0);
        let s_max = eigs.last().copied().unwrap_or(0.0);
        if s_max <= f64::EPSILON {
            return Err(Error::DegenerateInput(
                "random Gram matrix collapsed to zero".into(),
            ));
        }
        // ratio(a) = (1 + a*s_max) / (1 + a*s_min) increases monotonically
        // from 1 toward s_max/s_min, so plain bisection applies.
        let ratio = |a: f64| (1.0 + a * s_max) / (1.0 + a * s_min);
        let mut hi = 1.0f64;
        while ratio(hi) < condition {
            hi *= 2.0;
            if hi > 1e18 {
                return Err(Error::invalid(format!(
                    "condition number {condition} is not attainable for this draw \
                     (eigenvalue ratio saturates at {:.3e})",
                    s_max / s_min.max(f64::MIN_POSITIVE)
                )));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) < condition {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let alpha = 0.5 * (lo + hi);
        let mut covariance = Array2::eye(d);
        covariance.scaled_add(alpha, &gram);
        Self::new(mean, covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// The precision matrix `Q = covariance^{-1}`.
    pub fn precision(&self) -> &Array2<f64> {
        &self.precision
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol_lower(&self) -> &Array2<f64> {
        &self.chol_lower
    }

    /// `grad log p(x) = Q (mean - x)`.
    pub(crate) fn score(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let diff = &self.mean - &x;
        self.precision.dot(&diff)
    }

    /// `-1/2 (x - mean)^T Q (x - mean)`.
    pub(crate) fn log_density_unnorm(&self, x: ArrayView1<'_, f64>) -> f64 {
        let diff = &x - &self.mean;
        -0.5 * diff.dot(&self.precision.dot(&diff))
    }

    /// `x_i = mean + L z_i`, `z_i ~ N(0, I)`; each sample consumes `d`
    /// consecutive normal variates.
    pub(crate) fn sample_exact(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let d = self.dim();
        let mut rng = rng::rng_from_seed(seed);
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let z = rng::standard_normal_vector(&mut rng, d);
            let x = &self.mean + &self.chol_lower.dot(&z);
            row.assign(&x);
        }
        ParticleSet::new(out)
    }

    pub(crate) fn exact_moments(&self) -> Moments {
        let second = Array1::from_shape_fn(self.dim(), |j| {
            self.covariance[[j, j]] + self.mean[j] * self.mean[j]
        });
        Moments {
            mean: self.mean.clone(),
            second_moment_diag: second,
            covariance: Some(self.covariance.clone()),
        }
    }
}
