//! Gaussian-Bernoulli restricted Boltzmann machine (visible marginal).

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::rng;
use crate::targets::{logsumexp, Moments};

/// Hard cap on the number of hidden units for exact enumeration: moments and
/// exact sampling walk all `2^{d'}` hidden configurations.
const MAX_HIDDEN_FOR_ENUMERATION: usize = 20;

/// Visible marginal of the joint energy model
///
/// ```text
/// p(x, h) ∝ exp( x^T W h + b^T x + c^T h - ||x||^2 / 2 ),   h in {-1, +1}^{d'}
/// ```
///
/// Completing the square in `x` shows the marginal is an equal-covariance
/// Gaussian mixture with one component per hidden configuration:
/// `x | h ~ N(W h + b, I)` with mixing weight proportional to
/// `exp( c^T h + ||W h + b||^2 / 2 )`.  The score needs no enumeration at
/// all — summing out `h` per hidden unit gives
/// `score(x) = b - x + sum_k tanh(w_k^T x + c_k) w_k` with `w_k` the k-th
/// column of `W` — so the particle dynamics scale to large `d'` even though
/// exact sampling does not.
#[derive(Debug, Clone)]
pub struct RbmTarget {
    /// Coupling matrix `W`, `d x d'`.
    weights: Array2<f64>,
    /// Visible bias `b`, length `d`.
    visible_bias: Array1<f64>,
    /// Hidden bias `c`, length `d'`.
    hidden_bias: Array1<f64>,
}

impl RbmTarget {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let (d, dh) = (weights.nrows(), weights.ncols());
        if d == 0 || dh == 0 {
            return Err(Error::invalid(
                "RBM requires at least one visible and one hidden unit",
            ));
        }
        if visible_bias.len() != d {
            return Err(Error::dim("RBM visible bias", d, visible_bias.len()));
        }
        if hidden_bias.len() != dh {
            return Err(Error::dim("RBM hidden bias", dh, hidden_bias.len()));
        }
        if !weights.iter().all(|v| v.is_finite())
            || !visible_bias.iter().all(|v| v.is_finite())
            || !hidden_bias.iter().all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("RBM parameters".into()));
        }
        Ok(Self {
            weights,
            visible_bias,
            hidden_bias,
        })
    }

    /// Random model in the style used by the experiment harness: biases are
    /// standard normal, couplings are independent uniform signs times
    /// `weight_magnitude`.  Draw order: visible bias, hidden bias, then `W`
    /// row-major.
    pub fn random_sign_weights(
        d: usize,
        d_hidden: usize,
        weight_magnitude: f64,
        seed: u64,
    ) -> Result<Self> {
        if !weight_magnitude.is_finite() || weight_magnitude < 0.0 {
            return Err(Error::invalid(format!(
                "weight magnitude must be finite and >= 0, got {weight_magnitude}"
            )));
        }
        let mut rng = rng::rng_from_seed(seed);
        let visible_bias = rng::standard_normal_vector(&mut rng, d);
        let hidden_bias = rng::standard_normal_vector(&mut rng, d_hidden);
        let mut weights = Array2::zeros((d, d_hidden));
        for v in weights.iter_mut() {
            let u: f64 = rng.random();
            *v = if u < 0.5 {
                -weight_magnitude
            } else {
                weight_magnitude
            };
        }
        Self::new(weights, visible_bias, hidden_bias)
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    /// `score(x) = b - x + sum_k tanh(w_k^T x + c_k) w_k`.
    pub(crate) fn score(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = &self.visible_bias - &x;
        for (k, &c) in self.hidden_bias.iter().enumerate() {
            let col = self.weights.column(k);
            let t = (col.dot(&x) + c).tanh();
            out.scaled_add(t, &col);
        }
        out
    }

    /// `log p(x) + const = b^T x - ||x||^2/2 + sum_k log cosh(w_k^T x + c_k)`.
    pub(crate) fn log_density_unnorm(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut acc = self.visible_bias.dot(&x) - 0.5 * x.dot(&x);
        for (k, &c) in self.hidden_bias.iter().enumerate() {
            acc += log_cosh(self.weights.column(k).dot(&x) + c);
        }
        acc
    }

    /// Hidden configuration for enumeration index `idx`: bit `t` set means
    /// `h_t = +1`, clear means `h_t = -1`.
    fn hidden_config(&self, idx: usize) -> Array1<f64> {
        Array1::from_shape_fn(self.hidden_dim(), |t| {
            if (idx >> t) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
    }

    /// Component mean `W h + b` for enumeration index `idx`.
    fn component_mean(&self, idx: usize) -> Array1<f64> {
        let h = self.hidden_config(idx);
        &self.weights.dot(&h) + &self.visible_bias
    }

    fn check_enumerable(&self) -> Result<usize> {
        let dh = self.hidden_dim();
        if dh > MAX_HIDDEN_FOR_ENUMERATION {
            return Err(Error::Unsupported(format!(
                "exact enumeration over 2^{dh} hidden configurations exceeds the \
                 cap of 2^{MAX_HIDDEN_FOR_ENUMERATION}"
            )));
        }
        Ok(1usize << dh)
    }

    /// Normalized mixture weights over all hidden configurations.
    fn component_weights(&self) -> Result<Vec<f64>> {
        let count = self.check_enumerable()?;
        let mut logw = Vec::with_capacity(count);
        for idx in 0..count {
            let h = self.hidden_config(idx);
            let m = self.component_mean(idx);
            logw.push(self.hidden_bias.dot(&h) + 0.5 * m.dot(&m));
        }
        let lse = logsumexp(&logw);
        Ok(logw.into_iter().map(|l| (l - lse).exp()).collect())
    }

    /// Exact sampling by component enumeration: one uniform draw selects the
    /// hidden configuration, then `d` normal draws around its mean.
    pub(crate) fn sample_exact(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let weights = self.component_weights()?;
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cdf.push(acc);
        }
        let d = self.dim();
        let mut rng = rng::rng_from_seed(seed);
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let u: f64 = rng.random();
            let idx = match cdf.binary_search_by(|c| c.partial_cmp(&u).expect("finite cdf")) {
                Ok(i) => (i + 1).min(cdf.len() - 1),
                Err(i) => i.min(cdf.len() - 1),
            };
            let mean = self.component_mean(idx);
            let z = rng::standard_normal_vector(&mut rng, d);
            row.assign(&(&mean + &z));
        }
        ParticleSet::new(out)
    }

    /// Exact moments by enumeration: mixture of `N(m_h, I)` gives
    /// `E[x] = sum_h w_h m_h` and `E[x x^T] = I + sum_h w_h m_h m_h^T`.
    pub(crate) fn exact_moments(&self) -> Result<Moments> {
        let weights = self.component_weights()?;
        let d = self.dim();
        let mut mean = Array1::<f64>::zeros(d);
        let mut second_full = Array2::<f64>::eye(d);
        for (idx, &w) in weights.iter().enumerate() {
            let m = self.component_mean(idx);
            mean.scaled_add(w, &m);
            for a in 0..d {
                for b in 0..d {
                    second_full[[a, b]] += w * m[a] * m[b];
                }
            }
        }
        let second_diag = Array1::from_shape_fn(d, |j| second_full[[j, j]]);
        let mut cov = second_full;
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] -= mean[a] * mean[b];
            }
        }
        Ok(Moments {
            mean,
            second_moment_diag: second_diag,
            covariance: Some(cov),
        })
    }
}

/// `log cosh(t)` without overflow: `|t| + log1p(exp(-2|t|)) - log 2`.
fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_rbm() -> RbmTarget {
        RbmTarget::new(
            array![[0.3, -0.2], [0.1, 0.4]],
            array![0.5, -0.3],
            array![0.2, -0.1],
        )
        .unwrap()
    }

    #[test]
    fn log_cosh_is_stable_and_correct() {
        assert_abs_diff_eq!(log_cosh(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(log_cosh(1.0), 1f64.cosh().ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_cosh(-1.0), log_cosh(1.0), epsilon = 1e-15);
        // cosh(1000) overflows f64; log_cosh must not.
        assert!(log_cosh(1000.0).is_finite());
        assert_abs_diff_eq!(log_cosh(1000.0), 1000.0 - std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_rbm_samples_like_shifted_gaussian() {
        // W = 0 decouples x from h: the marginal is exactly N(b, I), so the
        // per-coordinate second moment is 1 + b_j^2.
        let t = RbmTarget::new(Array2::zeros((2, 2)), array![1.5, -0.5], array![0.3, 0.7]).unwrap();
        let x = t.sample_exact(100_000, 4).unwrap();
        let s2 = x.second_moment_diag();
        assert!((s2[0] - 3.25).abs() < 0.05, "E[x0^2] = {}", s2[0]);
        assert!((s2[1] - 1.25).abs() < 0.05, "E[x1^2] = {}", s2[1]);
        let m = t.exact_moments().unwrap();
        assert_abs_diff_eq!(m.mean[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.second_moment_diag[0], 3.25, epsilon = 1e-12);
    }

    #[test]
    fn score_of_decoupled_rbm_is_gaussian_score() {
        let t = RbmTarget::new(Array2::zeros((2, 1)), array![1.0, -1.0], array![0.0]).unwrap();
        let s = t.score(array![2.0, 0.0].view());
        assert_abs_diff_eq!(s[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_weights_are_normalized() {
        let w = small_rbm().component_weights().unwrap();
        assert_eq!(w.len(), 4);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let t = RbmTarget::new(
            Array2::zeros((2, 21)),
            array![0.0, 0.0],
            Array1::zeros(21),
        )
        .unwrap();
        // Score is fine at any hidden width...
        assert!(t.score(array![0.1, 0.2].view()).iter().all(|v| v.is_finite()));
        // ...but exact enumeration refuses.
        assert!(matches!(t.exact_moments(), Err(Error::Unsupported(_))));
        assert!(matches!(t.sample_exact(10, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn moments_match_sampler() {
        let t = small_rbm();
        let m = t.exact_moments().unwrap();
        let x = t.sample_exact(200_000, 8).unwrap();
        let sm = x.mean();
        for j in 0..2 {
            assert!(
                (sm[j] - m.mean[j]).abs() < 0.02,
                "mean[{j}]: sample {} vs exact {}",
                sm[j],
                m.mean[j]
            );
        }
        let s2 = x.second_moment_diag();
        for j in 0..2 {
            assert!(
                (s2[j] - m.second_moment_diag[j]).abs() < 0.05,
                "second[{j}]: sample {} vs exact {}",
                s2[j],
                m.second_moment_diag[j]
            );
        }
    }
}
