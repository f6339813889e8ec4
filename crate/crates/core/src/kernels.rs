//! Positive-definite kernels and their feature expansions.
//!
//! Two families matter here:
//!
//! * **Closed-form kernels** — the RBF `exp(-||x-y||^2 / (2 h^2))` and the
//!   inhomogeneous linear kernel `x^T y + 1`.
//! * **Feature kernels** — `k(x, y) = phi(x)^T phi(y)` for an explicit finite
//!   feature bank `phi`.  The linear kernel is itself the feature kernel of
//!   the bank `(x_1, ..., x_d, 1)`; random cosine features
//!   `sqrt(2) cos(w_1^T x / h + w_0)` with `w_1 ~ N(0, I)` and
//!   `w_0 ~ U[0, 2pi)` approximate the RBF with bandwidth `h` as the bank
//!   grows.
//!
//! Feature kernels are what make the particle dynamics cheap (cost linear in
//! the number of features instead of quadratic in particles) and what the
//! rank diagnostics in [`crate::svgd`] reason about.  The composite
//! `alpha * (x^T y + 1) + beta * sum_l psi_l(x) psi_l(y)` (linear block plus
//! `n - d - 1` raw cosine features, total feature count `n`) keeps the exact
//! moment-matching property of the linear kernel while adding enough features
//! to discriminate higher moments.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::particles::ParticleSet;
use crate::rng;

// ===== Feature banks =====

/// Random cosine features: row `l` evaluates
/// `sqrt(2) cos(directions_l . x / bandwidth + offsets_l)`.
///
/// The canonical scaling divides by `sqrt(m)` so that the bank's Gram matrix
/// is an unbiased estimate of the RBF kernel with the same bandwidth.  The
/// draw is made once and then frozen: re-selecting the bandwidth later (see
/// [`KernelSpec::refresh_bandwidth`]) rescales the argument but never
/// redraws `directions` or `offsets`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineBank {
    directions: Array2<f64>, // m x d
    offsets: Array1<f64>,    // m
    bandwidth: f64,
}

impl CosineBank {
    pub fn new(directions: Array2<f64>, offsets: Array1<f64>, bandwidth: f64) -> Result<Self> {
        if directions.nrows() == 0 || directions.ncols() == 0 {
            return Err(Error::invalid("cosine bank requires m >= 1 and d >= 1"));
        }
        if offsets.len() != directions.nrows() {
            return Err(Error::dim(
                "cosine bank offsets",
                directions.nrows(),
                offsets.len(),
            ));
        }
        if !directions.iter().all(|v| v.is_finite()) || !offsets.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("cosine bank parameters".into()));
        }
        if !bandwidth.is_finite() || bandwidth <= 0.0 {
            return Err(Error::invalid(format!(
                "bandwidth must be finite and positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            directions,
            offsets,
            bandwidth,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.directions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn directions(&self) -> &Array2<f64> {
        &self.directions
    }

    pub fn offsets(&self) -> &Array1<f64> {
        &self.offsets
    }

    /// Phase `directions_l . x / bandwidth + offsets_l` for every feature.
    fn phases(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut u = self.directions.dot(&x);
        u.mapv_inplace(|v| v / self.bandwidth);
        u + &self.offsets
    }
}

/// A finite feature map `phi: R^d -> R^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureBank {
    /// `phi(x) = (x_1, ..., x_d, 1)`, unnormalized; `m = d + 1`.
    Linear { dim: usize },
    /// Random cosine features scaled by `1/sqrt(m)`.
    RandomCosine(CosineBank),
}

impl FeatureBank {
    /// Draw a cosine bank: `m x d` standard-normal directions first
    /// (row-major), then `m` offsets uniform on `[0, 2pi)`.
    pub fn random_cosine(d: usize, m: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("cosine bank requires m >= 1 and d >= 1"));
        }
        let mut rng = rng::rng_from_seed(seed);
        let directions = rng::standard_normal_matrix(&mut rng, m, d);
        let offsets = rng::uniform_vector(&mut rng, m, 0.0, std::f64::consts::TAU);
        Ok(FeatureBank::RandomCosine(CosineBank::new(
            directions, offsets, bandwidth,
        )?))
    }

    pub fn feature_count(&self) -> usize {
        match self {
            FeatureBank::Linear { dim } => dim + 1,
            FeatureBank::RandomCosine(b) => b.feature_count(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureBank::Linear { dim } => *dim,
            FeatureBank::RandomCosine(b) => b.dim(),
        }
    }

    /// Evaluate the feature map with its canonical scaling, so that
    /// `phi(x) . phi(y)` equals [`KernelSpec::Feature`] applied to `(x, y)`.
    pub fn eval(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(x.len())?;
        Ok(match self {
            FeatureBank::Linear { dim } => {
                let mut out = Array1::zeros(dim + 1);
                out.slice_mut(ndarray::s![..*dim]).assign(&x);
                out[*dim] = 1.0;
                out
            }
            FeatureBank::RandomCosine(b) => {
                let scale = (2.0 / b.feature_count() as f64).sqrt();
                let mut u = b.phases(x);
                u.mapv_inplace(|v| scale * v.cos());
                u
            }
        })
    }

    /// Jacobian of the scaled feature map: `m x d`, row `l` is
    /// `grad phi_l(x)`.
    pub fn grad(&self, x: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.len())?;
        Ok(match self {
            FeatureBank::Linear { dim } => {
                let mut out = Array2::zeros((dim + 1, *dim));
                for j in 0..*dim {
                    out[[j, j]] = 1.0;
                }
                out
            }
            FeatureBank::RandomCosine(b) => {
                let scale = (2.0 / b.feature_count() as f64).sqrt();
                let u = b.phases(x);
                let mut out = Array2::zeros((b.feature_count(), b.dim()));
                for (l, mut row) in out.rows_mut().into_iter().enumerate() {
                    let coef = -scale * u[l].sin() / b.bandwidth();
                    row.assign(&b.directions.row(l));
                    row.mapv_inplace(|v| coef * v);
                }
                out
            }
        })
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::dim("feature bank input", self.dim(), got));
        }
        Ok(())
    }
}

// ===== Kernels =====

/// A positive-definite kernel on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(-||x - y||^2 / (2 bandwidth^2))`.
    Rbf { bandwidth: f64 },
    /// `x^T y + 1`.
    Linear,
    /// `phi(x)^T phi(y)` for an explicit bank (canonical scaling).
    Feature { bank: FeatureBank },
    /// `alpha (x^T y + 1) + beta sum_l psi_l(x) psi_l(y)` over the *raw*
    /// (un-averaged) cosine features of `bank`.
    LinearPlusRandom {
        alpha: f64,
        beta: f64,
        bank: FeatureBank,
    },
}

/// One summand of a feature kernel: `weight * raw(x)^T raw(y)` where `raw`
/// is the block's unscaled feature map.
#[derive(Debug, Clone)]
pub(crate) enum BlockKind<'a> {
    /// Raw features `(x_1, ..., x_d, 1)`; the ambient `d` comes from the data.
    LinearRaw,
    /// Raw features `sqrt(2) cos(w_1 . x / h + w_0)`.
    Cosine(&'a CosineBank),
}

#[derive(Debug, Clone)]
pub(crate) struct Block<'a> {
    pub weight: f64,
    pub kind: BlockKind<'a>,
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !bandwidth.is_finite() || bandwidth <= 0.0 {
            return Err(Error::invalid(format!(
                "bandwidth must be finite and positive, got {bandwidth}"
            )));
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }

    /// RBF with bandwidth from the median rule over `x`.
    pub fn rbf_median(x: &ParticleSet) -> Result<Self> {
        Self::rbf(median_bandwidth(x)?)
    }

    /// The composite kernel used when both exact low-order moments and
    /// higher-moment discrimination are wanted from `n` particles in `R^d`:
    ///
    /// * `n <= d + 1`: plain linear kernel (no room for extra features);
    /// * otherwise: `alpha = 1/(d+1)`, `beta = 1/(n-d-1)`, plus a fresh
    ///   cosine bank of `n - d - 1` features, for a total of `n` features.
    pub fn linear_plus_random(d: usize, n: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::invalid("linear_plus_random requires d >= 1 and n >= 1"));
        }
        if n <= d + 1 {
            return Ok(KernelSpec::Linear);
        }
        let extra = n - d - 1;
        Ok(KernelSpec::LinearPlusRandom {
            alpha: 1.0 / (d + 1) as f64,
            beta: 1.0 / extra as f64,
            bank: FeatureBank::random_cosine(d, extra, bandwidth, seed)?,
        })
    }

    /// Check internal parameter validity against ambient dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            KernelSpec::Rbf { bandwidth } => {
                if !bandwidth.is_finite() || *bandwidth <= 0.0 {
                    return Err(Error::invalid(format!(
                        "bandwidth must be finite and positive, got {bandwidth}"
                    )));
                }
            }
            KernelSpec::Linear => {}
            KernelSpec::Feature { bank } => {
                if bank.dim() != d {
                    return Err(Error::dim("feature bank dimension", d, bank.dim()));
                }
            }
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                if !alpha.is_finite() || !beta.is_finite() || *alpha <= 0.0 || *beta <= 0.0 {
                    return Err(Error::invalid(format!(
                        "composite kernel weights must be positive, got alpha={alpha}, beta={beta}"
                    )));
                }
                match bank {
                    FeatureBank::RandomCosine(b) => {
                        if b.dim() != d {
                            return Err(Error::dim("feature bank dimension", d, b.dim()));
                        }
                    }
                    FeatureBank::Linear { .. } => {
                        return Err(Error::invalid(
                            "the composite kernel's bank must be a cosine bank \
                             (its linear part is already built in)",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Decompose into weighted raw-feature blocks; `None` for the RBF, which
    /// has no finite feature expansion.
    pub(crate) fn blocks(&self) -> Option<Vec<Block<'_>>> {
        match self {
            KernelSpec::Rbf { .. } => None,
            KernelSpec::Linear => Some(vec![Block {
                weight: 1.0,
                kind: BlockKind::LinearRaw,
            }]),
            KernelSpec::Feature { bank } => Some(vec![match bank {
                FeatureBank::Linear { .. } => Block {
                    weight: 1.0,
                    kind: BlockKind::LinearRaw,
                },
                FeatureBank::RandomCosine(b) => Block {
                    weight: 1.0 / b.feature_count() as f64,
                    kind: BlockKind::Cosine(b),
                },
            }]),
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                let cosine = match bank {
                    FeatureBank::RandomCosine(b) => b,
                    FeatureBank::Linear { .. } => unreachable!("rejected by validate"),
                };
                Some(vec![
                    Block {
                        weight: *alpha,
                        kind: BlockKind::LinearRaw,
                    },
                    Block {
                        weight: *beta,
                        kind: BlockKind::Cosine(cosine),
                    },
                ])
            }
        }
    }

    /// Total feature count in ambient dimension `d`; `None` for the RBF.
    pub fn feature_count(&self, d: usize) -> Option<usize> {
        match self {
            KernelSpec::Rbf { .. } => None,
            KernelSpec::Linear => Some(d + 1),
            KernelSpec::Feature { bank } => Some(bank.feature_count()),
            KernelSpec::LinearPlusRandom { bank, .. } => Some(d + 1 + bank.feature_count()),
        }
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_pair(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        match self {
            KernelSpec::Rbf { bandwidth } => {
                let sq: f64 = x
                    .iter()
                    .zip(y.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Linear => x.dot(&y) + 1.0,
            KernelSpec::Feature { bank } => match bank {
                FeatureBank::Linear { .. } => x.dot(&y) + 1.0,
                FeatureBank::RandomCosine(b) => {
                    cosine_raw_dot(b, x, y) / b.feature_count() as f64
                }
            },
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                let b = match bank {
                    FeatureBank::RandomCosine(b) => b,
                    FeatureBank::Linear { .. } => unreachable!("rejected by validate"),
                };
                alpha * (x.dot(&y) + 1.0) + beta * cosine_raw_dot(b, x, y)
            }
        }
    }

    /// Gradient of `k` with respect to its **first** argument, evaluated at
    /// `(x, y)`.
    pub fn grad_x(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_pair(x, y)?;
        Ok(match self {
            KernelSpec::Rbf { bandwidth } => {
                let k = self.eval_unchecked(x, y);
                let h2 = bandwidth * bandwidth;
                Array1::from_shape_fn(x.len(), |j| -(x[j] - y[j]) / h2 * k)
            }
            KernelSpec::Linear => y.to_owned(),
            KernelSpec::Feature { bank } => match bank {
                FeatureBank::Linear { .. } => y.to_owned(),
                FeatureBank::RandomCosine(b) => {
                    let mut g = cosine_grad_dot(b, x, y);
                    g.mapv_inplace(|v| v / b.feature_count() as f64);
                    g
                }
            },
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                let b = match bank {
                    FeatureBank::RandomCosine(b) => b,
                    FeatureBank::Linear { .. } => unreachable!("rejected by validate"),
                };
                let mut g = cosine_grad_dot(b, x, y);
                g.mapv_inplace(|v| beta * v);
                g.scaled_add(*alpha, &y);
                g
            }
        })
    }

    /// `sum_j d^2 k / (dx_j dy_j)` — the mixed-derivative trace that appears
    /// in Stein kernels.
    pub fn grad_trace(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_pair(x, y)?;
        Ok(match self {
            KernelSpec::Rbf { bandwidth } => {
                let k = self.eval_unchecked(x, y);
                let h2 = bandwidth * bandwidth;
                let sq: f64 = x
                    .iter()
                    .zip(y.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                (x.len() as f64 / h2 - sq / (h2 * h2)) * k
            }
            KernelSpec::Linear => x.len() as f64,
            KernelSpec::Feature { bank } => match bank {
                FeatureBank::Linear { .. } => x.len() as f64,
                FeatureBank::RandomCosine(b) => {
                    cosine_grad_trace(b, x, y) / b.feature_count() as f64
                }
            },
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                let b = match bank {
                    FeatureBank::RandomCosine(b) => b,
                    FeatureBank::Linear { .. } => unreachable!("rejected by validate"),
                };
                alpha * x.len() as f64 + beta * cosine_grad_trace(b, x, y)
            }
        })
    }

    /// Feature matrix `Phi` (`m x n`) of the kernel over a particle set, with
    /// block scaling `sqrt(weight)` so that `Phi^T Phi` is the Gram matrix.
    /// `None` for the RBF.
    pub fn feature_matrix(&self, x: &ParticleSet) -> Result<Option<Array2<f64>>> {
        self.validate(x.dim())?;
        let blocks = match self.blocks() {
            None => return Ok(None),
            Some(b) => b,
        };
        let d = x.dim();
        let n = x.len();
        let m_total: usize = blocks
            .iter()
            .map(|b| match &b.kind {
                BlockKind::LinearRaw => d + 1,
                BlockKind::Cosine(c) => c.feature_count(),
            })
            .sum();
        let mut phi = Array2::zeros((m_total, n));
        let mut row0 = 0;
        for block in &blocks {
            let w = block.weight.sqrt();
            match &block.kind {
                BlockKind::LinearRaw => {
                    for i in 0..n {
                        let xi = x.particle(i);
                        for j in 0..d {
                            phi[[row0 + j, i]] = w * xi[j];
                        }
                        phi[[row0 + d, i]] = w;
                    }
                    row0 += d + 1;
                }
                BlockKind::Cosine(c) => {
                    for i in 0..n {
                        let u = c.phases(x.particle(i));
                        for l in 0..c.feature_count() {
                            phi[[row0 + l, i]] = w * std::f64::consts::SQRT_2 * u[l].cos();
                        }
                    }
                    row0 += c.feature_count();
                }
            }
        }
        Ok(Some(phi))
    }

    /// Does this kernel carry a data-dependent bandwidth?
    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            KernelSpec::Rbf { bandwidth } => Some(*bandwidth),
            KernelSpec::Linear => None,
            KernelSpec::Feature { bank } | KernelSpec::LinearPlusRandom { bank, .. } => {
                match bank {
                    FeatureBank::Linear { .. } => None,
                    FeatureBank::RandomCosine(b) => Some(b.bandwidth()),
                }
            }
        }
    }

    /// Replace the bandwidth, keeping any feature directions and offsets
    /// fixed.  No-op for kernels without one.
    pub fn set_bandwidth(&mut self, h: f64) -> Result<()> {
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::invalid(format!(
                "bandwidth must be finite and positive, got {h}"
            )));
        }
        match self {
            KernelSpec::Rbf { bandwidth } => *bandwidth = h,
            KernelSpec::Linear => {}
            KernelSpec::Feature { bank } | KernelSpec::LinearPlusRandom { bank, .. } => {
                if let FeatureBank::RandomCosine(b) = bank {
                    b.bandwidth = h;
                }
            }
        }
        Ok(())
    }

    /// Re-select the bandwidth by the median rule over the current particles.
    pub fn refresh_bandwidth(&mut self, x: &ParticleSet) -> Result<()> {
        if self.bandwidth().is_none() {
            return Ok(());
        }
        let h = median_bandwidth(x)?;
        self.set_bandwidth(h)
    }

    /// How often (in iterations) the driver should re-select the bandwidth:
    /// every step for the RBF (cheap, and the particle spread changes fast),
    /// every 50 steps for cosine banks (the features themselves move with
    /// `h`, so churn is kept low), never for bandwidth-free kernels.
    pub fn default_refresh_period(&self) -> Option<usize> {
        match self {
            KernelSpec::Rbf { .. } => Some(1),
            _ => self.bandwidth().map(|_| 50),
        }
    }

    fn check_pair(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::dim("kernel arguments", x.len(), y.len()));
        }
        self.validate(x.len())
    }
}

/// `sum_l raw_l(x) raw_l(y)` over raw cosine features.
fn cosine_raw_dot(b: &CosineBank, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let ux = b.phases(x);
    let uy = b.phases(y);
    ux.iter()
        .zip(uy.iter())
        .map(|(&a, &c)| 2.0 * a.cos() * c.cos())
        .sum()
}

/// `sum_l raw_l(y) grad_x raw_l(x)` over raw cosine features.
fn cosine_grad_dot(b: &CosineBank, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Array1<f64> {
    let ux = b.phases(x);
    let uy = b.phases(y);
    let mut out = Array1::zeros(b.dim());
    for l in 0..b.feature_count() {
        let coef = -2.0 * ux[l].sin() * uy[l].cos() / b.bandwidth();
        out.scaled_add(coef, &b.directions.row(l));
    }
    out
}

/// `sum_l grad raw_l(x) . grad raw_l(y)` over raw cosine features.
fn cosine_grad_trace(b: &CosineBank, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let ux = b.phases(x);
    let uy = b.phases(y);
    let h2 = b.bandwidth() * b.bandwidth();
    (0..b.feature_count())
        .map(|l| {
            let w = b.directions.row(l);
            2.0 * ux[l].sin() * uy[l].sin() * w.dot(&w) / h2
        })
        .sum()
}

// ===== Bandwidth selection =====

/// Median-distance bandwidth: `h^2 = med / (2 ln(n + 1))` where `med` is the
/// **lower** median of the `n(n-1)/2` pairwise squared distances.  With this
/// choice `sum_j k(x_i, x_j) ~ 1` for a typical particle, balancing the
/// attractive and repulsive parts of the dynamics.
///
/// Requires `n >= 2`; fails with a degenerate-input error when the median
/// distance is zero (more than half of all pairs coincide).
pub fn median_bandwidth(x: &ParticleSet) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(
            "median bandwidth needs at least two particles",
        ));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = x.particle(i);
        for j in (i + 1)..n {
            let sq: f64 = xi
                .iter()
                .zip(x.particle(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            dists.push(sq);
        }
    }
    let mid = (dists.len() - 1) / 2; // lower median
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let med = *med;
    if med <= 0.0 {
        return Err(Error::DegenerateInput(
            "median pairwise distance is zero; cannot select a bandwidth".into(),
        ));
    }
    Ok((med / (2.0 * ((n + 1) as f64).ln())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    use crate::linalg;

    #[test]
    fn rbf_eval_known_value() {
        // h = 1, x = (0,0), y = (2,0): exp(-4/2) = exp(-2).
        let k = KernelSpec::rbf(1.0).unwrap();
        let v = k
            .eval(array![0.0, 0.0].view(), array![2.0, 0.0].view())
            .unwrap();
        assert_abs_diff_eq!(v, (-2.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.1353352832366127, epsilon = 1e-15);
    }

    #[test]
    fn linear_eval_and_grad() {
        let k = KernelSpec::Linear;
        let v = k
            .eval(array![1.0, 2.0].view(), array![3.0, 4.0].view())
            .unwrap();
        assert_abs_diff_eq!(v, 12.0, epsilon = 1e-15);
        // Gradient in the first argument is y, independent of x.
        let g = k
            .grad_x(array![7.0, -5.0].view(), array![0.0, 1.0].view())
            .unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rbf_grad_known_value() {
        // h = 1, x = (1,0), y = (0,0): grad_x = -(x-y) exp(-1/2).
        let k = KernelSpec::rbf(1.0).unwrap();
        let g = k
            .grad_x(array![1.0, 0.0].view(), array![0.0, 0.0].view())
            .unwrap();
        assert_abs_diff_eq!(g[0], -(-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_symmetry_on_random_pairs() {
        let mut rng = crate::rng::rng_from_seed(17);
        let bank = FeatureBank::random_cosine(3, 11, 0.8, 5).unwrap();
        let kernels = vec![
            KernelSpec::rbf(0.7).unwrap(),
            KernelSpec::Linear,
            KernelSpec::Feature { bank: bank.clone() },
            KernelSpec::LinearPlusRandom {
                alpha: 0.25,
                beta: 0.5,
                bank,
            },
        ];
        for _ in 0..200 {
            let x = crate::rng::standard_normal_vector(&mut rng, 3);
            let y = crate::rng::standard_normal_vector(&mut rng, 3);
            for k in &kernels {
                let a = k.eval(x.view(), y.view()).unwrap();
                let b = k.eval(y.view(), x.view()).unwrap();
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "asymmetry {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn median_bandwidth_hand_cases() {
        // {0, 1, 3}: squared distances {1, 9, 4}, lower median 4,
        // h^2 = 4 / (2 ln 4) = 1/ln 2.
        let x = ParticleSet::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let h = median_bandwidth(&x).unwrap();
        assert_abs_diff_eq!(h * h, 1.0 / 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(h * h, 1.4426950408889634, epsilon = 1e-12);

        // Two particles at distance sqrt(2): h^2 = 2 / (2 ln 3) = 1/ln 3.
        let x = ParticleSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let h = median_bandwidth(&x).unwrap();
        assert_abs_diff_eq!(h * h, 1.0 / 3f64.ln(), epsilon = 1e-12);

        // All-identical particles cannot produce a bandwidth.
        let x = ParticleSet::from_rows(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert!(matches!(
            median_bandwidth(&x),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn feature_gram_matches_kernel_eval() {
        let mut rng = crate::rng::rng_from_seed(3);
        for bank in [
            FeatureBank::Linear { dim: 3 },
            FeatureBank::random_cosine(3, 17, 1.1, 9).unwrap(),
        ] {
            let k = KernelSpec::Feature { bank: bank.clone() };
            for _ in 0..50 {
                let x = crate::rng::standard_normal_vector(&mut rng, 3);
                let y = crate::rng::standard_normal_vector(&mut rng, 3);
                let via_features = bank
                    .eval(x.view())
                    .unwrap()
                    .dot(&bank.eval(y.view()).unwrap());
                let direct = k.eval(x.view(), y.view()).unwrap();
                assert!(
                    (via_features - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                    "feature dot {via_features} vs kernel {direct}"
                );
            }
        }
    }

    #[test]
    fn feature_matrix_gram_matches_composite_eval() {
        let x = ParticleSet::random_init(8, 3, 21).unwrap();
        let k = KernelSpec::linear_plus_random(3, 8, 0.9, 4).unwrap();
        let phi = k.feature_matrix(&x).unwrap().unwrap();
        assert_eq!(phi.nrows(), 8); // total feature count n
        let gram = phi.t().dot(&phi);
        for i in 0..8 {
            for j in 0..8 {
                let direct = k.eval(x.particle(i), x.particle(j)).unwrap();
                assert!(
                    (gram[[i, j]] - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                    "Gram mismatch at ({i},{j}): {} vs {direct}",
                    gram[[i, j]]
                );
            }
        }
    }

    #[test]
    fn linear_plus_random_small_n_degenerates_to_linear() {
        // n <= d + 1 leaves no room for extra features.
        assert_eq!(
            KernelSpec::linear_plus_random(5, 6, 1.0, 0).unwrap(),
            KernelSpec::Linear
        );
        // d = 5, n = 10: alpha = 1/6, beta = 1/4, 4 cosine features.
        match KernelSpec::linear_plus_random(5, 10, 1.0, 0).unwrap() {
            KernelSpec::LinearPlusRandom { alpha, beta, bank } => {
                assert_abs_diff_eq!(alpha, 1.0 / 6.0, epsilon = 1e-15);
                assert_abs_diff_eq!(beta, 0.25, epsilon = 1e-15);
                assert_eq!(bank.feature_count(), 4);
            }
            other => panic!("expected composite kernel, got {other:?}"),
        }
        // d = 5, n = 7: a single extra feature.
        match KernelSpec::linear_plus_random(5, 7, 1.0, 0).unwrap() {
            KernelSpec::LinearPlusRandom { bank, .. } => {
                assert_eq!(bank.feature_count(), 1)
            }
            other => panic!("expected composite kernel, got {other:?}"),
        }
    }

    #[test]
    fn cosine_bank_is_deterministic_in_seed() {
        let a = FeatureBank::random_cosine(4, 32, 1.0, 77).unwrap();
        let b = FeatureBank::random_cosine(4, 32, 1.0, 77).unwrap();
        assert_eq!(a, b);
        let c = FeatureBank::random_cosine(4, 32, 1.0, 78).unwrap();
        assert_ne!(a, c);
        if let FeatureBank::RandomCosine(bank) = &a {
            assert!(bank
                .offsets()
                .iter()
                .all(|&o| (0.0..std::f64::consts::TAU).contains(&o)));
        }
    }

    #[test]
    fn cosine_bank_converges_to_rbf_monotonically() {
        // Fixed evaluation pairs; max |k_m - k_rbf| must decrease along
        // m = 2^8, 2^10, 2^12.
        let h = 0.9;
        let rbf = KernelSpec::rbf(h).unwrap();
        let mut rng = crate::rng::rng_from_seed(1234);
        let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..50)
            .map(|_| {
                (
                    crate::rng::standard_normal_vector(&mut rng, 2),
                    crate::rng::standard_normal_vector(&mut rng, 2),
                )
            })
            .collect();
        let max_err = |m: usize, seed: u64| -> f64 {
            let k = KernelSpec::Feature {
                bank: FeatureBank::random_cosine(2, m, h, seed).unwrap(),
            };
            pairs
                .iter()
                .map(|(x, y)| {
                    (k.eval(x.view(), y.view()).unwrap()
                        - rbf.eval(x.view(), y.view()).unwrap())
                    .abs()
                })
                .fold(0.0, f64::max)
        };
        let e8 = max_err(256, 10);
        let e10 = max_err(1024, 11);
        let e12 = max_err(4096, 12);
        assert!(
            e8 > e10 && e10 > e12,
            "errors not monotone: {e8} -> {e10} -> {e12}"
        );
        assert!(e12 < 0.05, "m = 4096 error {e12} too large");
    }

    #[test]
    fn grad_trace_closed_forms() {
        // Linear kernel: trace is d everywhere.
        let k = KernelSpec::Linear;
        let t = k
            .grad_trace(array![1.0, 2.0, 3.0].view(), array![0.0, 0.0, 0.0].view())
            .unwrap();
        assert_abs_diff_eq!(t, 3.0, epsilon = 1e-15);
        // RBF at x = y: d / h^2.
        let k = KernelSpec::rbf(2.0).unwrap();
        let t = k
            .grad_trace(array![1.0, 1.0].view(), array![1.0, 1.0].view())
            .unwrap();
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn composite_requires_cosine_bank() {
        let bad = KernelSpec::LinearPlusRandom {
            alpha: 0.5,
            beta: 0.5,
            bank: FeatureBank::Linear { dim: 2 },
        };
        assert!(bad.validate(2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        // Every kernel must produce a positive semidefinite Gram matrix.
        #[test]
        fn gram_matrices_are_psd(
            seed in 0u64..5000,
            n in 2usize..9,
            d in 1usize..4,
        ) {
            let x = ParticleSet::random_init(n, d, seed).unwrap();
            let kernels = vec![
                KernelSpec::rbf(0.8).unwrap(),
                KernelSpec::Linear,
                KernelSpec::Feature {
                    bank: FeatureBank::random_cosine(d, 7, 1.0, seed ^ 0xabcd).unwrap(),
                },
                KernelSpec::linear_plus_random(d, n.max(d + 2) + 1, 1.0, seed ^ 0x1234).unwrap(),
            ];
            for k in kernels {
                let mut gram = Array2::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        gram[[i, j]] = k.eval(x.particle(i), x.particle(j)).unwrap();
                    }
                }
                let eigs = linalg::symmetric_eigenvalues(&gram).unwrap();
                let max = eigs.last().copied().unwrap_or(0.0).max(1.0);
                prop_assert!(
                    eigs[0] >= -1e-8 * max,
                    "kernel {k:?} produced min eigenvalue {} (max {max})", eigs[0]
                );
            }
        }
    }
}
