//! Deterministic random-number plumbing.
//!
//! Every stochastic operation in this workspace takes an explicit `u64` seed
//! and builds a private ChaCha8 stream from it.  ChaCha8 produces identical
//! output on every platform and word size, which is what makes byte-identical
//! result files possible regardless of thread count: threads never share an
//! RNG, they each derive their own seed with [`derive_seed`].
//!
//! Seed derivation uses the SplitMix64 finalizer (Steele, Lea & Flood 2014),
//! a bijective mixer with good avalanche behaviour.  `derive_seed(master,
//! &[a, b, c])` folds each tag into the state and mixes, so distinct tag
//! sequences yield effectively independent streams from one master seed.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Build the crate's standard RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer: one round of the mixing function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a sequence of integer tags.
///
/// The mapping is injective enough in practice that different tag paths never
/// collide by accident; callers use fixed tag layouts (stream id, grid index,
/// trial index, ...) documented where the scheme is defined.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x243f_6a88_85a3_08d3)));
    }
    state
}

/// Fill an `n x d` matrix with independent standard normal draws.
///
/// Draw order is row-major (all coordinates of row 0, then row 1, ...), which
/// is part of the determinism contract: the i-th sample consumes exactly `d`
/// consecutive normal variates.
pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, d));
    for mut row in out.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }
    out
}

/// Fill a length-`d` vector with independent standard normal draws.
pub fn standard_normal_vector(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    let mut out = Array1::zeros(d);
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    out
}

/// Uniform draw in `[lo, hi)` for each coordinate.
pub fn uniform_vector(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Array1<f64> {
    let mut out = Array1::zeros(d);
    for v in out.iter_mut() {
        *v = rng.random_range(lo..hi);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, &[1, 2, 3]);
        let b = derive_seed(42, &[1, 2, 3]);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, &[1, 2, 4]));
        assert_ne!(a, derive_seed(42, &[1, 2]));
        assert_ne!(a, derive_seed(43, &[1, 2, 3]));
        // Tag order matters.
        assert_ne!(derive_seed(42, &[1, 2]), derive_seed(42, &[2, 1]));
    }

    #[test]
    fn normal_matrix_draw_order_is_row_major() {
        let mut r1 = rng_from_seed(7);
        let m = standard_normal_matrix(&mut r1, 2, 3);
        let mut r2 = rng_from_seed(7);
        let flat: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut r2)).collect();
        let got: Vec<f64> = m.iter().copied().collect();
        assert_eq!(got, flat);
    }
}
