//! Mixture of identity-covariance Gaussians.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::rng;
use crate::targets::{logsumexp, Moments};

/// Absolute tolerance on `sum(weights) == 1`.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `p(x) = sum_k w_k N(x; mu_k, I_d)`.
///
/// Sharing the identity covariance across components keeps both the score and
/// the exact moments in closed form: responsibilities reduce to a softmax of
/// `log w_k - ||x - mu_k||^2 / 2`, and the covariance is
/// `I + sum_k w_k mu_k mu_k^T - m m^T`.
#[derive(Debug, Clone)]
pub struct GmmTarget {
    /// Component weights, length `K`, nonnegative, summing to 1.
    weights: Array1<f64>,
    /// Component means, `K x d`.
    means: Array2<f64>,
    /// Cumulative weights for the exact sampler.
    cdf: Vec<f64>,
}

impl GmmTarget {
    pub fn new(weights: Array1<f64>, means: Array2<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.nrows() != k {
            return Err(Error::dim("mixture means", k, means.nrows()));
        }
        if means.ncols() == 0 {
            return Err(Error::invalid("mixture requires d >= 1"));
        }
        if !weights.iter().all(|v| v.is_finite()) || !means.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("mixture parameters".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        let mut cdf = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &w in weights.iter() {
            acc += w;
            cdf.push(acc);
        }
        Ok(Self {
            weights,
            means,
            cdf,
        })
    }

    /// Equal-weight mixture with `k` means drawn coordinate-wise uniform on
    /// `[0, 1]` and then scaled by `spread >= 0`.  `spread == 0` collapses
    /// every mean to the origin, i.e. the standard normal.
    pub fn random_unit_cube(k: usize, d: usize, spread: f64, seed: u64) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::invalid("random mixture requires k >= 1 and d >= 1"));
        }
        if !spread.is_finite() || spread < 0.0 {
            return Err(Error::invalid(format!(
                "mean spread must be finite and >= 0, got {spread}"
            )));
        }
        let mut rng = rng::rng_from_seed(seed);
        let mut means = Array2::zeros((k, d));
        for mut row in means.rows_mut() {
            let u = rng::uniform_vector(&mut rng, d, 0.0, 1.0);
            row.assign(&(u * spread));
        }
        let weights = Array1::from_elem(k, 1.0 / k as f64);
        Self::new(weights, means)
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    /// Log of (weight * component density), up to the shared normalizer.
    fn component_log_terms(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.means.rows())
            .map(|(&w, mu)| {
                let sq: f64 = mu
                    .iter()
                    .zip(x.iter())
                    .map(|(&m, &v)| (v - m) * (v - m))
                    .sum();
                w.ln() - 0.5 * sq
            })
            .collect()
    }

    /// `score(x) = sum_k r_k(x) (mu_k - x)` with softmax responsibilities
    /// `r_k`.  Computed through log-sum-exp so that distant means (norms up
    /// to ~1e3 and beyond) cannot overflow into NaN.
    pub(crate) fn score(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let terms = self.component_log_terms(x);
        let lse = logsumexp(&terms);
        let mut out = Array1::zeros(self.dim());
        for (t, mu) in terms.iter().zip(self.means.rows()) {
            let r = (t - lse).exp();
            if r > 0.0 {
                for (o, (&m, &v)) in out.iter_mut().zip(mu.iter().zip(x.iter())) {
                    *o += r * (m - v);
                }
            }
        }
        out
    }

    pub(crate) fn log_density_unnorm(&self, x: ArrayView1<'_, f64>) -> f64 {
        logsumexp(&self.component_log_terms(x))
    }

    /// Component choice by inverse-CDF on one uniform draw, then `d` normal
    /// draws; `d + 1` variates per sample in a fixed order.
    pub(crate) fn sample_exact(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let d = self.dim();
        let mut rng = rng::rng_from_seed(seed);
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let u: f64 = rng.random();
            let k = self
                .cdf
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.cdf.len() - 1);
            let z = rng::standard_normal_vector(&mut rng, d);
            row.assign(&(&self.means.row(k) + &z));
        }
        ParticleSet::new(out)
    }

    pub(crate) fn exact_moments(&self) -> Moments {
        let d = self.dim();
        let mut mean = Array1::<f64>::zeros(d);
        for (&w, mu) in self.weights.iter().zip(self.means.rows()) {
            mean.scaled_add(w, &mu);
        }
        let mut second = Array1::<f64>::from_elem(d, 1.0);
        for (&w, mu) in self.weights.iter().zip(self.means.rows()) {
            for (s, &m) in second.iter_mut().zip(mu.iter()) {
                *s += w * m * m;
            }
        }
        let mut cov = Array2::<f64>::eye(d);
        for (&w, mu) in self.weights.iter().zip(self.means.rows()) {
            for a in 0..d {
                for b in 0..d {
                    cov[[a, b]] += w * mu[a] * mu[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] -= mean[a] * mean[b];
            }
        }
        Moments {
            mean,
            second_moment_diag: second,
            covariance: Some(cov),
        }
    }
}
