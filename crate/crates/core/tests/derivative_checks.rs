//! Central finite-difference validation of every analytic derivative the
//! library exposes: target scores against their unnormalized log-densities,
//! kernel gradients against kernel values, and the mixed-derivative traces
//! against the gradients.

use ndarray::{Array1, ArrayView1};

use steinmatch_core::kernels::{FeatureBank, KernelSpec};
use steinmatch_core::rng::{rng_from_seed, standard_normal_vector};
use steinmatch_core::targets::{GaussianTarget, GmmTarget, RbmTarget, TargetModel};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
const POINTS: usize = 100;

fn perturbed(x: ArrayView1<'_, f64>, q: usize, delta: f64) -> Array1<f64> {
    let mut out = x.to_owned();
    out[q] += delta;
    out
}

fn check_score_against_log_density(target: &TargetModel, label: &str, seed: u64) {
    let d = target.dim();
    let mut rng = rng_from_seed(seed);
    for p in 0..POINTS {
        let mut x = standard_normal_vector(&mut rng, d);
        x.mapv_inplace(|v| 2.0 * v);
        let score = target.score(x.view()).unwrap();
        let scale = score.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for q in 0..d {
            let plus = target
                .log_density_unnorm(perturbed(x.view(), q, FD_STEP).view())
                .unwrap();
            let minus = target
                .log_density_unnorm(perturbed(x.view(), q, -FD_STEP).view())
                .unwrap();
            let fd = (plus - minus) / (2.0 * FD_STEP);
            assert!(
                (fd - score[q]).abs() <= REL_TOL * scale,
                "{label}: score mismatch at point {p} coord {q}: fd={fd}, analytic={}",
                score[q]
            );
        }
    }
}

#[test]
fn scores_match_finite_differences() {
    let gaussian: TargetModel = GaussianTarget::random_nonspherical(3, 5.0, 21)
        .unwrap()
        .into();
    check_score_against_log_density(&gaussian, "nonspherical gaussian", 101);

    let gmm: TargetModel = GmmTarget::random_unit_cube(3, 2, 2.0, 22).unwrap().into();
    check_score_against_log_density(&gmm, "gaussian mixture", 102);

    let rbm: TargetModel = RbmTarget::random_sign_weights(3, 4, 0.4, 23).unwrap().into();
    check_score_against_log_density(&rbm, "rbm", 103);
}

fn test_kernels(d: usize) -> Vec<(&'static str, KernelSpec)> {
    vec![
        ("rbf", KernelSpec::rbf(0.9).unwrap()),
        ("linear", KernelSpec::Linear),
        (
            "random cosine",
            KernelSpec::Feature {
                bank: FeatureBank::random_cosine(d, 7, 1.1, 55).unwrap(),
            },
        ),
        (
            "linear plus random",
            KernelSpec::linear_plus_random(d, 10, 1.1, 56).unwrap(),
        ),
    ]
}

#[test]
fn kernel_gradients_match_finite_differences() {
    let d = 3;
    for (label, kernel) in test_kernels(d) {
        let mut rng = rng_from_seed(777);
        for p in 0..POINTS {
            let x = standard_normal_vector(&mut rng, d);
            let y = standard_normal_vector(&mut rng, d);
            let grad = kernel.grad_x(x.view(), y.view()).unwrap();
            let scale = grad.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            for q in 0..d {
                let plus = kernel
                    .eval(perturbed(x.view(), q, FD_STEP).view(), y.view())
                    .unwrap();
                let minus = kernel
                    .eval(perturbed(x.view(), q, -FD_STEP).view(), y.view())
                    .unwrap();
                let fd = (plus - minus) / (2.0 * FD_STEP);
                assert!(
                    (fd - grad[q]).abs() <= REL_TOL * scale,
                    "{label}: gradient mismatch at pair {p} coord {q}: fd={fd}, analytic={}",
                    grad[q]
                );
            }
        }
    }
}

#[test]
fn mixed_derivative_traces_match_finite_differences() {
    let d = 3;
    for (label, kernel) in test_kernels(d) {
        let mut rng = rng_from_seed(888);
        for p in 0..POINTS {
            let x = standard_normal_vector(&mut rng, d);
            let y = standard_normal_vector(&mut rng, d);
            let trace = kernel.grad_trace(x.view(), y.view()).unwrap();
            // Differentiate grad_x's q-th component in y_q and sum.
            let mut fd = 0.0;
            for q in 0..d {
                let plus = kernel
                    .grad_x(x.view(), perturbed(y.view(), q, FD_STEP).view())
                    .unwrap();
                let minus = kernel
                    .grad_x(x.view(), perturbed(y.view(), q, -FD_STEP).view())
                    .unwrap();
                fd += (plus[q] - minus[q]) / (2.0 * FD_STEP);
            }
            let scale = trace.abs().max(1.0);
            assert!(
                (fd - trace).abs() <= REL_TOL * scale,
                "{label}: trace mismatch at pair {p}: fd={fd}, analytic={trace}"
            );
        }
    }
}
