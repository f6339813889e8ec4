//! Built-in invariant suite: fast, randomized cross-checks of the numerical
//! core, runnable any time via `steinmatch check`.
//!
//! Each check validates one load-bearing identity through an independent
//! route:
//!
//! * analytic scores and kernel derivatives against central finite
//!   differences;
//! * the Stein identity `E_p[s(x)^T f(x) + div f(x)] = 0` against exact-
//!   sample Monte Carlo with a standard-error budget;
//! * the factorized feature-space Stein discrepancy against the pairwise
//!   kernel V-statistic, and the production V-statistic against a naive
//!   double loop over single-pair evaluations;
//! * the Gaussian Stein-equation solver against the closed-form quadratic
//!   expectation, plus pointwise reconstruction of the right-hand side.
//!
//! Checks report pass/fail with the worst observed error so a regression
//! shows up as a number, not just a flag.

use ndarray::{Array1, Array2, ArrayView1};

use steinmatch_core::kernels::{FeatureBank, KernelSpec};
use steinmatch_core::metrics::{
    ksd_squared, ksd_squared_features, solve_stein_equation_gaussian, stein_kernel,
    QuadraticFunction,
};
use steinmatch_core::rng::{self, derive_seed};
use steinmatch_core::targets::{GaussianTarget, GmmTarget, RbmTarget, TargetModel};
use steinmatch_core::ParticleSet;

/// Result of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn central_diff(f: &dyn Fn(ArrayView1<'_, f64>) -> f64, x: &Array1<f64>, j: usize) -> f64 {
    let mut plus = x.clone();
    plus[j] += FD_STEP;
    let mut minus = x.clone();
    minus[j] -= FD_STEP;
    (f(plus.view()) - f(minus.view())) / (2.0 * FD_STEP)
}

/// Three small representatives, one per target family.
fn target_zoo(seed: u64) -> Vec<(&'static str, TargetModel)> {
    vec![
        (
            "gaussian",
            crate::methods::conditioned_gaussian(3, 5.0, derive_seed(seed, &[1]))
                .expect("valid generator arguments")
                .into(),
        ),
        (
            "gmm",
            GmmTarget::random_unit_cube(3, 2, 2.0, derive_seed(seed, &[2]))
                .expect("valid generator arguments")
                .into(),
        ),
        (
            "rbm",
            RbmTarget::random_sign_weights(3, 4, 0.4, derive_seed(seed, &[3]))
                .expect("valid generator arguments")
                .into(),
        ),
    ]
}

/// Analytic scores vs. finite differences of the unnormalized log density.
pub fn score_gradient_check(seed: u64, points: usize) -> CheckOutcome {
    let mut rng = rng::rng_from_seed(seed);
    let mut max_rel = 0.0f64;
    for (_, target) in target_zoo(derive_seed(seed, &[7])) {
        let d = target.dim();
        let log_p = |x: ArrayView1<'_, f64>| {
            target
                .log_density_unnorm(x)
                .expect("log density defined everywhere")
        };
        for _ in 0..points {
            let x = rng::standard_normal_vector(&mut rng, d) * 2.0;
            let score = target.score(x.view()).expect("score defined everywhere");
            let scale = score.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for j in 0..d {
                let fd = central_diff(&log_p, &x, j);
                max_rel = max_rel.max((score[j] - fd).abs() / scale);
            }
        }
    }
    CheckOutcome {
        name: "score_gradients",
        passed: max_rel <= FD_TOL,
        detail: format!(
            "max relative error {max_rel:.2e} over {points} points x 3 target families (tol {FD_TOL:.0e})"
        ),
    }
}

fn kernel_zoo(seed: u64) -> Vec<(&'static str, KernelSpec, usize)> {
    vec![
        ("rbf", KernelSpec::rbf(0.9).expect("positive bandwidth"), 3),
        ("linear", KernelSpec::Linear, 3),
        (
            "cosine_bank",
            KernelSpec::Feature {
                bank: FeatureBank::random_cosine(3, 7, 1.1, derive_seed(seed, &[11]))
                    .expect("valid bank arguments"),
            },
            3,
        ),
        (
            "linear_plus_random",
            KernelSpec::linear_plus_random(3, 12, 1.0, derive_seed(seed, &[12]))
                .expect("valid composite arguments"),
            3,
        ),
    ]
}

/// Kernel first derivatives and mixed-derivative traces vs. finite
/// differences.
pub fn kernel_gradient_check(seed: u64, pairs: usize) -> CheckOutcome {
    let mut rng = rng::rng_from_seed(seed);
    let mut max_rel = 0.0f64;
    for (_, kernel, d) in kernel_zoo(derive_seed(seed, &[8])) {
        for _ in 0..pairs {
            let x = rng::standard_normal_vector(&mut rng, d);
            let y = rng::standard_normal_vector(&mut rng, d);
            let grad = kernel.grad_x(x.view(), y.view()).expect("gradient defined");
            let value = kernel.eval(x.view(), y.view()).expect("kernel defined");
            let scale = grad
                .iter()
                .fold(1.0f64.max(value.abs()), |a, v| a.max(v.abs()));
            // d/dx_j k(x, y)
            let k_of_x =
                |z: ArrayView1<'_, f64>| kernel.eval(z, y.view()).expect("kernel defined");
            for j in 0..d {
                let fd = central_diff(&k_of_x, &x, j);
                max_rel = max_rel.max((grad[j] - fd).abs() / scale);
            }
            // sum_q d/dy_q [grad_x k(x, y)]_q
            let trace = kernel
                .grad_trace(x.view(), y.view())
                .expect("trace defined");
            let mut fd_trace = 0.0;
            for q in 0..d {
                let grad_q_of_y = |z: ArrayView1<'_, f64>| {
                    kernel.grad_x(x.view(), z).expect("gradient defined")[q]
                };
                fd_trace += central_diff(&grad_q_of_y, &y, q);
            }
            max_rel = max_rel.max((trace - fd_trace).abs() / scale.max(trace.abs()));
        }
    }
    CheckOutcome {
        name: "kernel_gradients",
        passed: max_rel <= FD_TOL,
        detail: format!(
            "max relative error {max_rel:.2e} over {pairs} pairs x 4 kernels (tol {FD_TOL:.0e})"
        ),
    }
}

/// `E_p[s_j(x) g(x) + d_j g(x)] = 0` for `g(x) = exp(-||x||^2)`, checked by
/// exact-sample Monte Carlo within four standard errors per coordinate.
pub fn stein_identity_check(seed: u64, samples: usize) -> CheckOutcome {
    let mut worst = 0.0f64;
    for (index, (_, target)) in target_zoo(derive_seed(seed, &[9])).into_iter().enumerate() {
        let d = target.dim();
        let x = target
            .sample_exact(samples, derive_seed(seed, &[21, index as u64]))
            .expect("exact sampler available");
        let n = x.len() as f64;
        let mut sums = vec![0.0f64; d];
        let mut sq_sums = vec![0.0f64; d];
        for i in 0..x.len() {
            let xi = x.particle(i);
            let score = target.score(xi).expect("score defined everywhere");
            let gauss = (-xi.dot(&xi)).exp();
            for j in 0..d {
                let v = (score[j] - 2.0 * xi[j]) * gauss;
                sums[j] += v;
                sq_sums[j] += v * v;
            }
        }
        for j in 0..d {
            let mean = sums[j] / n;
            let variance = (sq_sums[j] / n - mean * mean).max(0.0);
            let se = (variance / n).sqrt() + 1e-12;
            worst = worst.max(mean.abs() / se);
        }
    }
    CheckOutcome {
        name: "stein_identity",
        passed: worst <= 4.0,
        detail: format!(
            "max |mean| / SE = {worst:.2} over 3 target families, {samples} samples each (budget 4)"
        ),
    }
}

fn random_particles(seed: u64, n: usize, d: usize, spread: f64) -> ParticleSet {
    let mut rng = rng::rng_from_seed(seed);
    let positions = rng::standard_normal_matrix(&mut rng, n, d) * spread;
    ParticleSet::new(positions).expect("finite positions")
}

/// Factorized feature-route discrepancy vs. the pairwise kernel V-statistic.
pub fn ksd_route_check(seed: u64, cases: usize) -> CheckOutcome {
    let mut max_rel = 0.0f64;
    for case in 0..cases as u64 {
        let d = 1 + (case % 4) as usize;
        let case_seed = derive_seed(seed, &[32, case]);
        // one dimension admits only condition number 1
        let condition = if d == 1 { 1.0 } else { 3.0 };
        let target: TargetModel = match case % 3 {
            0 => crate::methods::conditioned_gaussian(d, condition, case_seed)
                .expect("valid generator arguments")
                .into(),
            1 => GmmTarget::random_unit_cube(2 + (case % 3) as usize, d, 1.5, case_seed)
                .expect("valid generator arguments")
                .into(),
            _ => RbmTarget::random_sign_weights(d, 3, 0.3, case_seed)
                .expect("valid generator arguments")
                .into(),
        };
        let bank = if case % 2 == 0 {
            FeatureBank::random_cosine(
                d,
                3 + (case % 5) as usize,
                0.8 + 0.1 * (case % 4) as f64,
                derive_seed(seed, &[33, case]),
            )
            .expect("valid bank arguments")
        } else {
            FeatureBank::Linear { dim: d }
        };
        let x = random_particles(
            derive_seed(seed, &[34, case]),
            4 + (case % 7) as usize,
            d,
            1.5,
        );
        let fast = ksd_squared_features(&target, &bank, &x).expect("feature route defined");
        let kernel = KernelSpec::Feature { bank };
        let pairwise = ksd_squared(&target, &kernel, &x).expect("pairwise route defined");
        let rel = (fast - pairwise).abs() / fast.abs().max(pairwise.abs()).max(1e-30);
        max_rel = max_rel.max(rel);
    }
    CheckOutcome {
        name: "ksd_feature_route",
        passed: max_rel <= 1e-10,
        detail: format!(
            "max relative gap {max_rel:.2e} over {cases} random (target, bank, particles) triples (tol 1e-10)"
        ),
    }
}

/// The production V-statistic vs. an independent naive double loop built
/// from single-pair Stein-kernel evaluations.
pub fn ksd_naive_check(seed: u64, cases: usize) -> CheckOutcome {
    let mut max_rel = 0.0f64;
    for case in 0..cases as u64 {
        let d = 1 + (case % 3) as usize;
        let n = 5 + (case % 8) as usize;
        let case_seed = derive_seed(seed, &[42, case]);
        // one dimension admits only condition number 1
        let condition = if d == 1 { 1.0 } else { 4.0 };
        let target: TargetModel = match case % 3 {
            0 => crate::methods::conditioned_gaussian(d, condition, case_seed)
                .expect("valid generator arguments")
                .into(),
            1 => GmmTarget::random_unit_cube(3, d, 1.0, case_seed)
                .expect("valid generator arguments")
                .into(),
            _ => RbmTarget::random_sign_weights(d, 2, 0.3, case_seed)
                .expect("valid generator arguments")
                .into(),
        };
        let kernel = match case % 4 {
            0 => KernelSpec::rbf(1.1).expect("positive bandwidth"),
            1 => KernelSpec::Linear,
            2 => KernelSpec::Feature {
                bank: FeatureBank::random_cosine(d, 4, 0.9, derive_seed(seed, &[43, case]))
                    .expect("valid bank arguments"),
            },
            _ => KernelSpec::linear_plus_random(d, n, 0.9, derive_seed(seed, &[44, case]))
                .expect("valid composite arguments"),
        };
        let x = random_particles(derive_seed(seed, &[45, case]), n, d, 1.2);
        let mut naive = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                naive += stein_kernel(&target, &kernel, x.particle(i), x.particle(j))
                    .expect("stein kernel defined");
            }
        }
        naive /= (x.len() * x.len()) as f64;
        let production = ksd_squared(&target, &kernel, &x).expect("production route defined");
        let rel = (naive - production).abs() / naive.abs().max(production.abs()).max(1e-30);
        max_rel = max_rel.max(rel);
    }
    CheckOutcome {
        name: "ksd_reference_implementation",
        passed: max_rel <= 1e-12,
        detail: format!(
            "max relative gap {max_rel:.2e} over {cases} random inputs (tol 1e-12)"
        ),
    }
}

/// Stein-equation solver vs. the closed-form Gaussian quadratic expectation,
/// plus pointwise reconstruction of the right-hand side.
pub fn stein_solver_check(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = rng::rng_from_seed(derive_seed(seed, &[51]));
    let mut max_expectation_err = 0.0f64;
    let mut max_reconstruction = 0.0f64;
    for case in 0..cases as u64 {
        let d = 1 + (case % 5) as usize;
        let mean = rng::uniform_vector(&mut rng, d, -1.0, 1.0);
        let w = rng::standard_normal_matrix(&mut rng, d, d);
        let covariance =
            Array2::eye(d) + (0.3 / d as f64) * &w.dot(&w.t());
        let target = GaussianTarget::new(mean.clone(), covariance.clone())
            .expect("identity-plus-PSD covariance is positive definite");
        let a_vals = rng::uniform_vector(&mut rng, d * d, -1.0, 1.0);
        let a = Array2::from_shape_vec((d, d), a_vals.to_vec()).expect("shape matches");
        let b = rng::uniform_vector(&mut rng, d, -1.0, 1.0);
        let c = rng::uniform_vector(&mut rng, 1, -1.0, 1.0)[0];
        let f = QuadraticFunction::new(a.clone(), b.clone(), c).expect("finite coefficients");
        let solution =
            solve_stein_equation_gaussian(&target, &f).expect("positive definite covariance");

        // closed form: E[x^T A x + b^T x + c] = tr(A Sigma) + mu^T A mu + b^T mu + c
        let trace_a_sigma = a.dot(&covariance).diag().sum();
        let closed = trace_a_sigma + mean.dot(&a.dot(&mean)) + b.dot(&mean) + c;
        max_expectation_err =
            max_expectation_err.max((solution.implied_expectation() - closed).abs());

        let model: TargetModel = target.into();
        let trace_g = solution.field_matrix().diag().sum();
        for _ in 0..20 {
            let x = rng::standard_normal_vector(&mut rng, d) * 1.5;
            let score = model.score(x.view()).expect("score defined everywhere");
            let field = solution.evaluate_field(x.view());
            let reconstructed = score.dot(&field) + trace_g + solution.implied_expectation();
            max_reconstruction = max_reconstruction.max((f.evaluate(x.view()) - reconstructed).abs());
        }
    }
    let passed = max_expectation_err <= 1e-8 && max_reconstruction <= 1e-8;
    CheckOutcome {
        name: "stein_equation_solver",
        passed,
        detail: format!(
            "max expectation error {max_expectation_err:.2e}, max reconstruction residual \
             {max_reconstruction:.2e} over {cases} random Gaussian/quadratic pairs (tol 1e-8)"
        ),
    }
}

/// The full suite at standard sizes (a few seconds of CPU).
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    vec![
        score_gradient_check(derive_seed(seed, &[101]), 100),
        kernel_gradient_check(derive_seed(seed, &[102]), 100),
        stein_identity_check(derive_seed(seed, &[103]), 1_000_000),
        ksd_route_check(derive_seed(seed, &[104]), 50),
        ksd_naive_check(derive_seed(seed, &[105]), 12),
        stein_solver_check(derive_seed(seed, &[106]), 50),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_gradients_pass_at_reduced_size() {
        let out = score_gradient_check(5, 10);
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn kernel_gradients_pass_at_reduced_size() {
        let out = kernel_gradient_check(6, 10);
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn stein_identity_passes_at_reduced_size() {
        let out = stein_identity_check(7, 50_000);
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn ksd_routes_agree_at_reduced_size() {
        let out = ksd_route_check(8, 10);
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn naive_ksd_agrees_at_reduced_size() {
        let out = ksd_naive_check(9, 6);
        assert!(out.passed, "{}", out.detail);
    }

    #[test]
    fn stein_solver_matches_closed_form_at_reduced_size() {
        let out = stein_solver_check(10, 10);
        assert!(out.passed, "{}", out.detail);
    }
}
