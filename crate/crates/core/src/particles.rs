//! The particle ensemble: an `n x d` matrix of positions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::rng;

/// A finite set of `n >= 1` particles in `R^d`, stored row-major (one row per
/// particle).  Construction checks that every coordinate is finite; all
/// operations in this crate may assume it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    positions: Array2<f64>,
}

impl ParticleSet {
    /// Wrap an `n x d` position matrix.
    ///
    /// Fails if `n == 0`, `d == 0`, or any entry is not finite.
    pub fn new(positions: Array2<f64>) -> Result<Self> {
        if positions.nrows() == 0 {
            return Err(Error::invalid("particle set must contain at least one particle"));
        }
        if positions.ncols() == 0 {
            return Err(Error::invalid("particle dimension must be at least 1"));
        }
        if let Some((idx, _)) = positions
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, row)| !row.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "particle {idx} has a non-finite coordinate"
            )));
        }
        Ok(Self { positions })
    }

    /// Build from plain nested vectors; rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("particle set must contain at least one particle"));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::dim("ParticleSet::from_rows", d, rows[bad].len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let positions = Array2::from_shape_vec((rows.len(), d), flat)
            .expect("shape checked above");
        Self::new(positions)
    }

    /// The standard initialization for particle dynamics: `n` i.i.d. draws
    /// from `N(0, 4 I_d)` (standard deviation 2), seeded.
    pub fn random_init(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("random_init requires n >= 1 and d >= 1"));
        }
        let mut rng = rng::rng_from_seed(seed);
        let mut z = rng::standard_normal_matrix(&mut rng, n, d);
        z.mapv_inplace(|v| 2.0 * v);
        Self::new(z)
    }

    /// Number of particles `n`.
    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    /// Always false: the empty set is unrepresentable.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    /// Borrow the `n x d` position matrix.
    pub fn positions(&self) -> ArrayView2<'_, f64> {
        self.positions.view()
    }

    /// Borrow particle `i` as a length-`d` view.
    pub fn particle(&self, i: usize) -> ArrayView1<'_, f64> {
        self.positions.row(i)
    }

    /// Consume into the raw position matrix.
    pub fn into_positions(self) -> Array2<f64> {
        self.positions
    }

    /// Coordinate-wise sample mean (length `d`).
    pub fn mean(&self) -> Array1<f64> {
        let n = self.len() as f64;
        let mut acc = Array1::zeros(self.dim());
        for row in self.positions.rows() {
            acc += &row;
        }
        acc / n
    }

    /// Coordinate-wise mean of squares (length `d`).
    pub fn second_moment_diag(&self) -> Array1<f64> {
        let n = self.len() as f64;
        let mut acc = Array1::<f64>::zeros(self.dim());
        for row in self.positions.rows() {
            for (a, &v) in acc.iter_mut().zip(row.iter()) {
                *a += v * v;
            }
        }
        acc / n
    }

    /// Sample covariance with denominator `n` (not `n - 1`).
    pub fn covariance(&self) -> Array2<f64> {
        let n = self.len() as f64;
        let mean = self.mean();
        let d = self.dim();
        let mut acc = Array2::<f64>::zeros((d, d));
        for row in self.positions.rows() {
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in 0..d {
                    acc[[a, b]] += da * (row[b] - mean[b]);
                }
            }
        }
        acc / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ParticleSet::from_rows(&[]).is_err());
        assert!(ParticleSet::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(ParticleSet::from_rows(&[vec![1.0], vec![f64::INFINITY]]).is_err());
        assert!(ParticleSet::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn moments_of_small_set() {
        // Particles {(0,0), (2,4)}: mean (1,2), mean-of-squares (2,8),
        // covariance [[1,2],[2,4]] with denominator n.
        let p = ParticleSet::new(array![[0.0, 0.0], [2.0, 4.0]]).unwrap();
        let m = p.mean();
        assert_abs_diff_eq!(m[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 2.0, epsilon = 1e-15);
        let s2 = p.second_moment_diag();
        assert_abs_diff_eq!(s2[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s2[1], 8.0, epsilon = 1e-15);
        let c = p.covariance();
        assert_abs_diff_eq!(c[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[[0, 1]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[[1, 1]], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn random_init_is_deterministic_and_scaled() {
        let a = ParticleSet::random_init(2000, 3, 11).unwrap();
        let b = ParticleSet::random_init(2000, 3, 11).unwrap();
        assert_eq!(a, b);
        // Variance should be near 4 in every coordinate.
        let s2 = a.second_moment_diag();
        for &v in s2.iter() {
            assert!((v - 4.0).abs() < 0.4, "second moment {v} far from 4");
        }
    }
}
