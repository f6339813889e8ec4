//! Thin adapters over dense decompositions.
//!
//! Public data in this crate lives in `ndarray`; the handful of places that
//! need a factorization (Cholesky, symmetric eigenvalues, singular values)
//! convert to `nalgebra` here and convert back.  nalgebra's decompositions are
//! pure Rust and single-threaded, so results do not depend on the number of
//! worker threads or on which BLAS happens to be installed — a requirement
//! for reproducible output files.

use ndarray::Array2;

use crate::error::{Error, Result};

fn to_na(a: &Array2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &nalgebra::DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Lower-triangular Cholesky factor `L` with `L L^T = a`.
///
/// Fails when `a` is not (numerically) positive definite.
pub fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::linalg::Cholesky::new(to_na(a)).ok_or_else(|| {
        Error::invalid("matrix is not positive definite (Cholesky factorization failed)")
    })?;
    Ok(from_na(&chol.l()))
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::linalg::Cholesky::new(to_na(a)).ok_or_else(|| {
        Error::invalid("matrix is not positive definite (Cholesky factorization failed)")
    })?;
    Ok(from_na(&chol.inverse()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("symmetric_eigenvalues", a.nrows(), a.ncols()));
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(to_na(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(vals)
}

/// Singular values of an arbitrary rectangular matrix, descending.
pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    let svd = nalgebra::linalg::SVD::new_unordered(to_na(a), false, false);
    let mut vals: Vec<f64> = svd.singular_values.iter().copied().collect();
    vals.sort_by(|x, y| y.partial_cmp(x).expect("singular values are finite"));
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_of_known_matrix() {
        // [[4, 2], [2, 3]] = L L^T with L = [[2, 0], [1, sqrt(2)]].
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_lower(&a).unwrap();
        assert_abs_diff_eq!(l[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[[1, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[[1, 1]], 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(&a).is_err());
    }

    #[test]
    fn spd_inverse_matches_hand_inverse() {
        let a = array![[2.0, 0.0], [0.0, 4.0]];
        let inv = spd_inverse(&a).unwrap();
        assert_abs_diff_eq!(inv[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(inv[[1, 1]], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let vals = symmetric_eigenvalues(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_values_of_rank_one() {
        // [[1, 1], [1, 1]] has singular values {2, 0}.
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let vals = singular_values(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 0.0, epsilon = 1e-12);
    }
}
