//! The particle update loop.
//!
//! Each iteration moves every particle along the velocity field
//!
//! ```text
//! v(y) = (1/n) sum_j [ score(x_j) k(x_j, y) + grad_x k(x_j, y) ]
//! ```
//!
//! evaluated at the particle's own position, with all positions read *before*
//! any is written (a simultaneous update).  The first term transports
//! particles toward high density, the second repels them from each other; a
//! particle set is a fixed point exactly when the two balance everywhere.
//!
//! For kernels with an explicit feature expansion `k = sum_l c_l psi_l psi_l`
//! the double sum factorizes: precompute, once per iteration, the per-feature
//! averages
//!
//! ```text
//! t_l = (1/n) sum_j [ score(x_j) psi_l(x_j) + grad psi_l(x_j) ]
//! ```
//!
//! and evaluate `v(y) = sum_l c_l t_l psi_l(y)`.  This costs `O(n m d)`
//! instead of `O(n^2 m d)` and exposes the fixed-point structure directly:
//! when the feature matrix over the particles has full row rank, `v == 0` on
//! the particle set forces every `t_l` to vanish individually — one exact
//! moment constraint per feature.  [`rank_condition`] checks that hypothesis
//! numerically.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::kernels::{Block, BlockKind, CosineBank, FeatureBank, KernelSpec};
use crate::linalg;
use crate::particles::ParticleSet;
use crate::targets::TargetModel;

/// Residual level treated as a blow-up: no sane run on these targets ever
/// produces velocities this large, so exceeding it aborts with a divergence
/// error instead of looping to the iteration cap.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Per-coordinate step-size rule.
#[derive(Debug, Clone, PartialEq)]
pub enum StepScheduler {
    /// Displacement `step_size * v`.
    Fixed,
    /// AdaGrad with momentum: the squared-velocity accumulator
    /// `a <- momentum * a + (1 - momentum) * v^2` normalizes the step to
    /// `step_size * v / (fudge + sqrt(a))`.  Scale-free per coordinate, which
    /// makes the transport phase robust to badly scaled targets, but it
    /// stalls near fixed points (the normalized step has magnitude ~
    /// `step_size` whenever `v` dominates `fudge`); follow with a
    /// [`StepScheduler::Fixed`] polish when tight residuals are wanted.
    AdaGrad { fudge: f64, momentum: f64 },
}

/// When to re-select a data-dependent bandwidth during [`run`].
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRefresh {
    /// The kernel's own default: every iteration for the RBF, every 50 for
    /// cosine banks, never for bandwidth-free kernels.
    KernelDefault,
    /// Keep the bandwidth exactly as supplied.
    Frozen,
    /// Re-select every `n`-th iteration (must be >= 1).
    Every(usize),
}

/// Configuration for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvgdConfig {
    /// Base step size (the AdaGrad normalizer makes this roughly the maximum
    /// per-coordinate displacement).
    pub step_size: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Stop when the fixed-point residual falls to or below this.
    pub residual_tol: f64,
    pub scheduler: StepScheduler,
    /// Seed associated with the run; [`run`] itself draws nothing, but
    /// callers use it to derive the initial particle set.
    pub seed: u64,
    /// Relative singular-value threshold for the final rank diagnostic.
    pub rank_rel_tol: f64,
    pub bandwidth_refresh: BandwidthRefresh,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_iters: 5000,
            residual_tol: 1e-7,
            scheduler: StepScheduler::AdaGrad {
                fudge: 1e-6,
                momentum: 0.9,
            },
            seed: 0,
            rank_rel_tol: 1e-10,
            bandwidth_refresh: BandwidthRefresh::KernelDefault,
        }
    }
}

impl SvgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::invalid(format!(
                "step size must be finite and positive, got {}",
                self.step_size
            )));
        }
        if !self.residual_tol.is_finite() || self.residual_tol < 0.0 {
            return Err(Error::invalid(format!(
                "residual tolerance must be finite and >= 0, got {}",
                self.residual_tol
            )));
        }
        if let StepScheduler::AdaGrad { fudge, momentum } = self.scheduler {
            if !fudge.is_finite() || fudge <= 0.0 {
                return Err(Error::invalid(format!(
                    "AdaGrad fudge factor must be finite and positive, got {fudge}"
                )));
            }
            if !momentum.is_finite() || !(0.0..1.0).contains(&momentum) {
                return Err(Error::invalid(format!(
                    "AdaGrad momentum must lie in [0, 1), got {momentum}"
                )));
            }
        }
        if !self.rank_rel_tol.is_finite() || self.rank_rel_tol <= 0.0 || self.rank_rel_tol >= 1.0 {
            return Err(Error::invalid(format!(
                "rank tolerance must lie in (0, 1), got {}",
                self.rank_rel_tol
            )));
        }
        if let BandwidthRefresh::Every(0) = self.bandwidth_refresh {
            return Err(Error::invalid("bandwidth refresh period must be >= 1"));
        }
        Ok(())
    }
}

/// What [`run`] observed.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// Number of update steps actually taken.
    pub iterations_run: usize,
    /// Fixed-point residual at the final particle set.
    pub final_residual: f64,
    /// Residual after each step; length equals `iterations_run`.
    pub residual_trace: Vec<f64>,
    /// Whether `final_residual <= residual_tol`.
    pub converged: bool,
    /// Outcome of the feature-rank diagnostic at the final particle set;
    /// `None` for kernels without a finite feature expansion.
    pub rank_ok: Option<bool>,
    /// Bandwidth in effect at the end, if the kernel has one (it may have
    /// been re-selected during the run).
    pub final_bandwidth: Option<f64>,
    /// Wall-clock seconds spent inside [`run`].
    pub wall_time: f64,
}

// ===== Velocity field =====

fn check_setup(target: &TargetModel, kernel: &KernelSpec, x: &ParticleSet) -> Result<()> {
    if target.dim() != x.dim() {
        return Err(Error::dim("target vs particles", target.dim(), x.dim()));
    }
    kernel.validate(x.dim())
}

/// Scores of every particle, one row each.
pub(crate) fn score_matrix(target: &TargetModel, x: &ParticleSet) -> Result<Array2<f64>> {
    let mut scores = Array2::zeros((x.len(), x.dim()));
    for i in 0..x.len() {
        scores.row_mut(i).assign(&target.score(x.particle(i))?);
    }
    Ok(scores)
}

/// Per-feature Stein averages `t_l = (1/n) sum_j [ s_j psi_l(x_j) +
/// grad psi_l(x_j) ]` over one block's **raw** features; `m_block x d`.
pub(crate) fn block_stein_averages(
    kind: &BlockKind<'_>,
    x: &ParticleSet,
    scores: &Array2<f64>,
) -> Array2<f64> {
    let n = x.len();
    let d = x.dim();
    let nf = n as f64;
    match kind {
        BlockKind::LinearRaw => {
            // Raw features (x_1, ..., x_d, 1): psi_l(x) = x_l contributes
            // s x_l + e_l, the constant feature contributes s.
            let mut t = Array2::zeros((d + 1, d));
            for j in 0..n {
                let xj = x.particle(j);
                let sj = scores.row(j);
                for l in 0..d {
                    let c = xj[l];
                    let mut row = t.row_mut(l);
                    for q in 0..d {
                        row[q] += c * sj[q];
                    }
                }
                let mut last = t.row_mut(d);
                for q in 0..d {
                    last[q] += sj[q];
                }
            }
            t.mapv_inplace(|v| v / nf);
            for l in 0..d {
                t[[l, l]] += 1.0;
            }
            t
        }
        BlockKind::Cosine(bank) => {
            let m = bank.feature_count();
            let h = bank.bandwidth();
            let mut t = Array2::zeros((m, d));
            for j in 0..n {
                let xj = x.particle(j);
                let sj = scores.row(j);
                for l in 0..m {
                    let w = bank.directions().row(l);
                    let u = phase(bank, w, xj, l);
                    let raw = std::f64::consts::SQRT_2 * u.cos();
                    let gcoef = -std::f64::consts::SQRT_2 * u.sin() / h;
                    let mut row = t.row_mut(l);
                    for q in 0..d {
                        row[q] += raw * sj[q] + gcoef * w[q];
                    }
                }
            }
            t.mapv_inplace(|v| v / nf);
            t
        }
    }
}

fn phase(bank: &CosineBank, w: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>, l: usize) -> f64 {
    let mut dot = 0.0;
    for q in 0..x.len() {
        dot += w[q] * x[q];
    }
    dot / bank.bandwidth() + bank.offsets()[l]
}

/// Add `weight * sum_l t_l psi_l(y)` into `out`.
fn add_block_velocity_at(
    kind: &BlockKind<'_>,
    t: &Array2<f64>,
    weight: f64,
    y: ArrayView1<'_, f64>,
    out: &mut Array1<f64>,
) {
    let d = y.len();
    match kind {
        BlockKind::LinearRaw => {
            for l in 0..d {
                let c = weight * y[l];
                let row = t.row(l);
                for q in 0..d {
                    out[q] += c * row[q];
                }
            }
            let row = t.row(d);
            for q in 0..d {
                out[q] += weight * row[q];
            }
        }
        BlockKind::Cosine(bank) => {
            for l in 0..bank.feature_count() {
                let w = bank.directions().row(l);
                let u = phase(bank, w, y, l);
                let c = weight * std::f64::consts::SQRT_2 * u.cos();
                let row = t.row(l);
                for q in 0..d {
                    out[q] += c * row[q];
                }
            }
        }
    }
}

/// Velocities of all particles, one row each (`n x d`).
///
/// This is the batched form of [`velocity_field`]; the two agree bit-for-bit
/// when evaluated at a particle's own position.
pub fn velocities(
    target: &TargetModel,
    kernel: &KernelSpec,
    x: &ParticleSet,
) -> Result<Array2<f64>> {
    check_setup(target, kernel, x)?;
    let n = x.len();
    let d = x.dim();
    let scores = score_matrix(target, x)?;
    let mut v = Array2::zeros((n, d));
    match kernel.blocks() {
        None => {
            // RBF: the plain O(n^2 d) double loop.
            let h = kernel.bandwidth().expect("RBF always has a bandwidth");
            let h2 = h * h;
            let nf = n as f64;
            for i in 0..n {
                let xi = x.particle(i);
                let mut vi = v.row_mut(i);
                for j in 0..n {
                    let xj = x.particle(j);
                    let sj = scores.row(j);
                    let mut sq = 0.0;
                    for q in 0..d {
                        let diff = xj[q] - xi[q];
                        sq += diff * diff;
                    }
                    let k = (-sq / (2.0 * h2)).exp();
                    for q in 0..d {
                        // grad in the first argument at (x_j, x_i).
                        vi[q] += sj[q] * k + (xi[q] - xj[q]) / h2 * k;
                    }
                }
                for q in 0..d {
                    vi[q] /= nf;
                }
            }
        }
        Some(blocks) => {
            // Evaluation points coincide with the particles, so each cosine
            // phase u_{jl} feeds both the Stein average and the velocity;
            // compute cos/sin once per (particle, feature) pair.  Loop order
            // matches [`block_stein_averages`] / [`add_block_velocity_at`]
            // exactly, keeping the batched and single-point routes bitwise
            // equal.
            let averages: Vec<(Block<'_>, Array2<f64>, Option<Array2<f64>>)> = blocks
                .into_iter()
                .map(|b| match &b.kind {
                    BlockKind::LinearRaw => {
                        let t = block_stein_averages(&b.kind, x, &scores);
                        (b, t, None)
                    }
                    BlockKind::Cosine(bank) => {
                        let m = bank.feature_count();
                        let h = bank.bandwidth();
                        let mut cos_u = Array2::zeros((n, m));
                        let mut sin_u = Array2::zeros((n, m));
                        for j in 0..n {
                            let xj = x.particle(j);
                            for l in 0..m {
                                let u = phase(bank, bank.directions().row(l), xj, l);
                                cos_u[[j, l]] = u.cos();
                                sin_u[[j, l]] = u.sin();
                            }
                        }
                        let mut t = Array2::zeros((m, d));
                        let nf = n as f64;
                        for j in 0..n {
                            let sj = scores.row(j);
                            for l in 0..m {
                                let w = bank.directions().row(l);
                                let raw = std::f64::consts::SQRT_2 * cos_u[[j, l]];
                                let gcoef = -std::f64::consts::SQRT_2 * sin_u[[j, l]] / h;
                                let mut row = t.row_mut(l);
                                for q in 0..d {
                                    row[q] += raw * sj[q] + gcoef * w[q];
                                }
                            }
                        }
                        t.mapv_inplace(|v| v / nf);
                        (b, t, Some(cos_u))
                    }
                })
                .collect();
            for i in 0..n {
                let mut out = Array1::zeros(d);
                for (block, t, cos_u) in &averages {
                    match (&block.kind, cos_u) {
                        (BlockKind::Cosine(bank), Some(cos_u)) => {
                            for l in 0..bank.feature_count() {
                                let c =
                                    block.weight * std::f64::consts::SQRT_2 * cos_u[[i, l]];
                                let row = t.row(l);
                                for q in 0..d {
                                    out[q] += c * row[q];
                                }
                            }
                        }
                        _ => add_block_velocity_at(
                            &block.kind,
                            t,
                            block.weight,
                            x.particle(i),
                            &mut out,
                        ),
                    }
                }
                v.row_mut(i).assign(&out);
            }
        }
    }
    Ok(v)
}

/// The velocity field at an arbitrary point `y`.
pub fn velocity_field(
    target: &TargetModel,
    kernel: &KernelSpec,
    x: &ParticleSet,
    y: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_setup(target, kernel, x)?;
    if y.len() != x.dim() {
        return Err(Error::dim("velocity evaluation point", x.dim(), y.len()));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("velocity evaluation point".into()));
    }
    let n = x.len();
    let d = x.dim();
    let scores = score_matrix(target, x)?;
    match kernel.blocks() {
        None => {
            let h = kernel.bandwidth().expect("RBF always has a bandwidth");
            let h2 = h * h;
            let nf = n as f64;
            let mut out = Array1::zeros(d);
            for j in 0..n {
                let xj = x.particle(j);
                let sj = scores.row(j);
                let mut sq = 0.0;
                for q in 0..d {
                    let diff = xj[q] - y[q];
                    sq += diff * diff;
                }
                let k = (-sq / (2.0 * h2)).exp();
                for q in 0..d {
                    out[q] += sj[q] * k + (y[q] - xj[q]) / h2 * k;
                }
            }
            for q in 0..d {
                out[q] /= nf;
            }
            Ok(out)
        }
        Some(blocks) => {
            let mut out = Array1::zeros(d);
            for block in blocks {
                let t = block_stein_averages(&block.kind, x, &scores);
                add_block_velocity_at(&block.kind, &t, block.weight, y, &mut out);
            }
            Ok(out)
        }
    }
}

fn row_sup_norm(v: &Array2<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Largest velocity magnitude over the particle set:
/// `max_i || v(x_i) ||_inf`.  Zero exactly at fixed points.
pub fn fixed_point_residual(
    target: &TargetModel,
    kernel: &KernelSpec,
    x: &ParticleSet,
) -> Result<f64> {
    let v = velocities(target, kernel, x)?;
    Ok(row_sup_norm(&v))
}

fn ensure_finite_velocities(v: &Array2<f64>) -> Result<()> {
    for (i, row) in v.rows().into_iter().enumerate() {
        if !row.iter().all(|val| val.is_finite()) {
            return Err(Error::NumericOverflow {
                index: i,
                detail: "velocity is not finite".into(),
            });
        }
    }
    Ok(())
}

/// One simultaneous update `x_i <- x_i + step_size * v(x_i)`.
///
/// `step_size == 0` returns the particle set unchanged.  A non-finite
/// velocity aborts with [`Error::NumericOverflow`] naming the particle.
pub fn svgd_step(
    target: &TargetModel,
    kernel: &KernelSpec,
    x: &ParticleSet,
    step_size: f64,
) -> Result<ParticleSet> {
    if !step_size.is_finite() || step_size < 0.0 {
        return Err(Error::invalid(format!(
            "step size must be finite and >= 0, got {step_size}"
        )));
    }
    if step_size == 0.0 {
        return Ok(x.clone());
    }
    let v = velocities(target, kernel, x)?;
    ensure_finite_velocities(&v)?;
    let mut pos = x.positions().to_owned();
    pos.scaled_add(step_size, &v);
    ParticleSet::new(pos)
}

/// Iterate the particle update until the fixed-point residual reaches
/// `residual_tol` or `max_iters` steps have been taken.
///
/// The kernel is copied internally; data-dependent bandwidths are re-selected
/// according to `cfg.bandwidth_refresh` (skipped whenever fewer than two
/// particles exist, since no pairwise distances are available).  Residuals
/// beyond `1e6`, or non-finite, abort with [`Error::Divergence`] carrying the
/// residual history.
///
/// With `max_iters == 0` the initial particle set is returned untouched and
/// `converged` reports whether it already meets the tolerance.
pub fn run(
    target: &TargetModel,
    kernel: &KernelSpec,
    x0: &ParticleSet,
    cfg: &SvgdConfig,
) -> Result<(ParticleSet, RunReport)> {
    cfg.validate()?;
    check_setup(target, kernel, x0)?;
    let start = Instant::now();
    let mut kernel = kernel.clone();
    let refresh_period = match cfg.bandwidth_refresh {
        BandwidthRefresh::KernelDefault => kernel.default_refresh_period(),
        BandwidthRefresh::Frozen => None,
        BandwidthRefresh::Every(p) => kernel.bandwidth().map(|_| p),
    };
    let mut x = x0.clone();
    if refresh_period.is_some() && x.len() >= 2 {
        kernel.refresh_bandwidth(&x)?;
    }
    let mut v = velocities(target, &kernel, &x)?;
    ensure_finite_velocities(&v)?;
    let mut residual = row_sup_norm(&v);
    let mut trace = Vec::new();
    let mut accumulator: Option<Array2<f64>> = match cfg.scheduler {
        StepScheduler::Fixed => None,
        StepScheduler::AdaGrad { .. } => Some(Array2::zeros((x.len(), x.dim()))),
    };
    let mut iters = 0usize;
    let mut converged = residual <= cfg.residual_tol;
    while !converged && iters < cfg.max_iters {
        let mut pos = x.positions().to_owned();
        match cfg.scheduler {
            StepScheduler::Fixed => {
                pos.scaled_add(cfg.step_size, &v);
            }
            StepScheduler::AdaGrad { fudge, momentum } => {
                let a = accumulator.as_mut().expect("allocated above");
                for ((p, &g), acc) in pos.iter_mut().zip(v.iter()).zip(a.iter_mut()) {
                    *acc = momentum * *acc + (1.0 - momentum) * g * g;
                    *p += cfg.step_size * g / (fudge + acc.sqrt());
                }
            }
        }
        for (i, row) in pos.rows().into_iter().enumerate() {
            if !row.iter().all(|val| val.is_finite()) {
                return Err(Error::NumericOverflow {
                    index: i,
                    detail: "position is not finite after update".into(),
                });
            }
        }
        x = ParticleSet::new(pos)?;
        iters += 1;
        if let Some(p) = refresh_period {
            if iters % p == 0 && x.len() >= 2 {
                kernel.refresh_bandwidth(&x)?;
            }
        }
        v = velocities(target, &kernel, &x)?;
        ensure_finite_velocities(&v)?;
        residual = row_sup_norm(&v);
        trace.push(residual);
        if !residual.is_finite() || residual > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                iterations: iters,
                residual,
                trace,
            });
        }
        converged = residual <= cfg.residual_tol;
    }
    let rank_ok = rank_condition_for_kernel(&kernel, &x, cfg.rank_rel_tol)?.map(|rc| rc.ok);
    let report = RunReport {
        iterations_run: iters,
        final_residual: residual,
        residual_trace: trace,
        converged,
        rank_ok,
        final_bandwidth: kernel.bandwidth(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}

// ===== Rank diagnostics =====

/// Outcome of the feature-rank check.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCheck {
    /// Number of features `m` (rows of the feature matrix).
    pub feature_count: usize,
    /// Numeric rank: singular values at or above `rel_tol * sigma_max`.
    pub numeric_rank: usize,
    /// `m > n`: full row rank is impossible regardless of the data.
    pub infeasible: bool,
    /// Full row rank achieved (always false when infeasible).
    pub ok: bool,
}

fn rank_from_matrix(phi: &Array2<f64>, rel_tol: f64) -> Result<RankCheck> {
    if !rel_tol.is_finite() || rel_tol <= 0.0 || rel_tol >= 1.0 {
        return Err(Error::invalid(format!(
            "rank tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    let m = phi.nrows();
    let n = phi.ncols();
    let sigma = linalg::singular_values(phi)?;
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let numeric_rank = if sigma_max <= 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s >= rel_tol * sigma_max).count()
    };
    let infeasible = m > n;
    Ok(RankCheck {
        feature_count: m,
        numeric_rank,
        infeasible,
        ok: !infeasible && numeric_rank >= m,
    })
}

/// Does the bank's feature matrix over `x` have full row rank?
///
/// Full row rank is the hypothesis under which a vanishing velocity field on
/// the particles decouples into one exact constraint per feature.  More
/// features than particles (`m > n`) is reported as `infeasible` (and not
/// ok) rather than conflated with a rank deficiency of the data.
pub fn rank_condition(bank: &FeatureBank, x: &ParticleSet, rel_tol: f64) -> Result<RankCheck> {
    if bank.dim() != x.dim() {
        return Err(Error::dim("feature bank vs particles", bank.dim(), x.dim()));
    }
    let m = bank.feature_count();
    let mut phi = Array2::zeros((m, x.len()));
    for i in 0..x.len() {
        let f = bank.eval(x.particle(i))?;
        phi.column_mut(i).assign(&f);
    }
    rank_from_matrix(&phi, rel_tol)
}

/// Rank check against a kernel's full (possibly composite) feature matrix;
/// `None` for kernels without a finite feature expansion.
pub fn rank_condition_for_kernel(
    kernel: &KernelSpec,
    x: &ParticleSet,
    rel_tol: f64,
) -> Result<Option<RankCheck>> {
    match kernel.feature_matrix(x)? {
        None => Ok(None),
        Some(phi) => rank_from_matrix(&phi, rel_tol).map(Some),
    }
}
